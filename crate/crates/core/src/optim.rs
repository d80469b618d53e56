use ndarray::{Array2, Zip};

/// Adam with bias correction, over a fixed list of parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let first: Vec<Array2<f64>> = shapes.into_iter().map(Array2::zeros).collect();
        let second = first.clone();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first,
            second,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: Vec<&Array2<f64>>) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                *p -= update;
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn minimizes_quadratic() {
        let mut x = array![[3.0, -2.0]];
        let mut adam = Adam::new(0.1, [(1, 2)]);
        for _ in 0..500 {
            let g = x.mapv(|v| 2.0 * v);
            adam.step(vec![&mut x], vec![&g]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut x = array![[1.5]];
        let mut adam = Adam::new(0.0, [(1, 1)]);
        adam.step(vec![&mut x], vec![&array![[4.0]]]);
        assert_eq!(x[[0, 0]], 1.5);
    }
}
