//! Adaptive-moment gradient descent with bias correction.

use crate::model::ParamSet;

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .iter()
            .map(|(_, t)| (vec![0.0; t.numel()], vec![0.0; t.numel()]))
            .unzip();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m,
            v,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// One update over the whole set; `grads` is slot-parallel, `None`
    /// entries are skipped.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Vec<f64>>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, (_, tensor)) in params.iter_mut().enumerate() {
            let Some(g) = grads.get(slot).and_then(|g| g.as_ref()) else {
                continue;
            };
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let data = tensor.data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn descends_a_quadratic() {
        // minimize (x - 3)^2 elementwise
        let mut params = ParamSet::new();
        params
            .insert("x", Tensor::vector(&[0.0, 10.0]).unwrap())
            .unwrap();
        let mut adam = Adam::new(&params, 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let x = params.get(params.id_of("x").unwrap()).data().to_vec();
            let g: Vec<f64> = x.iter().map(|v| 2.0 * (v - 3.0)).collect();
            adam.step(&mut params, &[Some(g)]);
        }
        for &v in params.get(params.id_of("x").unwrap()).data() {
            assert!((v - 3.0).abs() < 1e-3, "converged to {v}");
        }
    }

    #[test]
    fn missing_grads_leave_params_untouched() {
        let mut params = ParamSet::new();
        params.insert("x", Tensor::vector(&[1.5]).unwrap()).unwrap();
        let mut adam = Adam::new(&params, 0.1, 0.9, 0.999, 1e-8);
        adam.step(&mut params, &[None]);
        assert_eq!(params.get(params.id_of("x").unwrap()).data(), &[1.5]);
    }
}
