use nalgebra::DVector;

use crate::error::{Error, Result};

/// Feasible set of the primal variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Unconstrained,
    /// Euclidean ball of the given radius around the origin.
    Ball { radius: f64 },
}

impl Domain {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match *self {
            Domain::Unconstrained => x.iter().all(|v| v.is_finite()),
            Domain::Ball { radius } => x.norm() <= radius * (1.0 + 1e-12),
        }
    }
}

/// `argmin_{x in X} <z, x> + |x|^2 / (2 step)`.
pub fn project(z: &DVector<f64>, step: f64, domain: &Domain) -> Result<DVector<f64>> {
    if !(step > 0.0) {
        return Err(Error::Data(format!("step must be positive, got {step}")));
    }
    let x = z * -step;
    Ok(match *domain {
        Domain::Unconstrained => x,
        Domain::Ball { radius } => {
            let n = x.norm();
            if n > radius {
                x * (radius / n)
            } else {
                x
            }
        }
    })
}
