//! Symmetric triangle quadrature rules in barycentric coordinates. Weights
//! sum to one and are scaled by the element area by the caller.

#[derive(Clone, Debug)]
pub struct Rule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn orbit3(a: f64, w: f64, pts: &mut Vec<[f64; 3]>, ws: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a, b], [a, b, a], [b, a, a]] {
        pts.push(p);
        ws.push(w);
    }
}

impl Rule {
    /// Smallest built-in rule exact for polynomials of total degree `degree`.
    pub fn of_degree(degree: usize) -> Rule {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match degree {
            0 | 1 => {
                points.push([1.0 / 3.0; 3]);
                weights.push(1.0);
                Rule { degree: 1, points, weights }
            }
            2 => {
                orbit3(1.0 / 6.0, 1.0 / 3.0, &mut points, &mut weights);
                Rule { degree: 2, points, weights }
            }
            3 | 4 => {
                orbit3(0.445_948_490_915_965, 0.223_381_589_678_011, &mut points, &mut weights);
                orbit3(0.091_576_213_509_771, 0.109_951_743_655_322, &mut points, &mut weights);
                Rule { degree: 4, points, weights }
            }
            5 => {
                points.push([1.0 / 3.0; 3]);
                weights.push(0.225);
                orbit3(0.470_142_064_105_115, 0.132_394_152_788_506, &mut points, &mut weights);
                orbit3(0.101_286_507_323_456, 0.125_939_180_544_827, &mut points, &mut weights);
                Rule { degree: 5, points, weights }
            }
            _ => panic!("no built-in rule of degree {degree}"),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
