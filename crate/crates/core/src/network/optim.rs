//! Adam with bias correction. Moment buffers are keyed by parameter index,
//! so the caller must pass gradients in canonical parameter order every
//! step.

use ndarray::Array4;

use crate::error::{Error, Result};

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Array4<f64>>,
    v: Vec<Array4<f64>>,
}

impl Adam {
    pub fn new() -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(
        &mut self,
        params: &mut [(String, Array4<f64>)],
        grads: &[Array4<f64>],
        lr: f64,
    ) -> Result<()> {
        if !lr.is_finite() || lr <= 0.0 {
            return Err(Error::invalid(format!("learning rate {lr} must be positive")));
        }
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, p)| Array4::zeros(p.dim())).collect();
            self.v = params.iter().map(|(_, p)| Array4::zeros(p.dim())).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (name, p)) in params.iter_mut().enumerate() {
            let g = &grads[i];
            if g.dim() != p.dim() {
                return Err(Error::invalid(format!(
                    "gradient shape {:?} for parameter {name} {:?}",
                    g.dim(),
                    p.dim()
                )));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, &gv), (mv, vv)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mh = *mv / bc1;
                let vh = *vv / bc2;
                *pv -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}

/// Step-decay schedule: the rate halves once per completed period.
pub fn scheduled_lr(base: f64, epoch: usize, halving_period: usize) -> f64 {
    let period = halving_period.max(1);
    base * 0.5f64.powi((epoch / period) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut params = vec![("p".to_string(), Array4::from_elem((1, 1, 1, 1), 1.0))];
        let grads = vec![Array4::from_elem((1, 1, 1, 1), 0.5)];
        let mut opt = Adam::new();
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert_abs_diff_eq!(params[0].1[[0, 0, 0, 0]], 1.0 - 0.1, epsilon = 1e-6);
    }

    #[test]
    fn descends_a_quadratic() {
        // Minimize (x - 3)^2; gradient 2(x - 3).
        let mut params = vec![("x".to_string(), Array4::from_elem((1, 1, 1, 1), 0.0))];
        let mut opt = Adam::new();
        for _ in 0..500 {
            let x = params[0].1[[0, 0, 0, 0]];
            let grads = vec![Array4::from_elem((1, 1, 1, 1), 2.0 * (x - 3.0))];
            opt.step(&mut params, &grads, 0.05).unwrap();
        }
        assert_abs_diff_eq!(params[0].1[[0, 0, 0, 0]], 3.0, epsilon = 1e-2);
    }

    #[test]
    fn schedule_halves_by_period() {
        assert_eq!(scheduled_lr(0.002, 0, 10), 0.002);
        assert_eq!(scheduled_lr(0.002, 9, 10), 0.002);
        assert_eq!(scheduled_lr(0.002, 10, 10), 0.001);
        assert_eq!(scheduled_lr(0.002, 25, 10), 0.0005);
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut params = vec![("p".to_string(), Array4::zeros((1, 2, 1, 1)))];
        let grads = vec![Array4::zeros((1, 3, 1, 1))];
        let mut opt = Adam::new();
        assert!(opt.step(&mut params, &grads, 0.1).is_err());
        assert!(opt.step(&mut params, &[], 0.1).is_err());
    }
}
