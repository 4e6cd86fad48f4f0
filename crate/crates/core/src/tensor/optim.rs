use super::{ParamSet, Real, Result, Tensor, TensorError};

fn check_grads<T: Real>(params: &ParamSet<T>, grads: &[Tensor<T>]) -> Result<()> {
    if grads.len() != params.len() {
        return Err(TensorError::ShapeMismatch {
            op: "sgd_step",
            left: format!("{} parameters", params.len()),
            right: format!("{} gradients", grads.len()),
        });
    }
    for (e, g) in params.entries().iter().zip(grads) {
        e.value.check_same("sgd_step", g)?;
        if !g.all_finite() {
            return Err(TensorError::NonFiniteGradient(e.name.clone()));
        }
    }
    Ok(())
}

/// Plain gradient descent: every value is decremented by `lr × gradient`.
/// Nothing is modified when any gradient is non-finite.
pub fn sgd_step<T: Real>(params: &mut ParamSet<T>, grads: &[Tensor<T>], lr: T) -> Result<()> {
    check_grads(params, grads)?;
    for (slot, g) in grads.iter().enumerate() {
        let p = params.get_mut(slot);
        p.data_mut().iter_mut().zip(g.data()).for_each(|(v, &d)| *v -= lr * d);
    }
    Ok(())
}

/// Gradient descent with optional heavy-ball momentum.
///
/// `v ← μ·v + g; p ← p − lr·v`. With `momentum == 0` this is exactly
/// [`sgd_step`].
#[derive(Debug, Clone)]
pub struct Sgd<T: Real = f32> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(lr: T, momentum: T) -> Self {
        Self { lr, momentum, velocity: Vec::new() }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Tensor<T>]) -> Result<()> {
        if self.momentum == T::zero() {
            return sgd_step(params, grads, self.lr);
        }
        check_grads(params, grads)?;
        if self.velocity.len() != grads.len() {
            self.velocity = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }
        for (slot, (g, v)) in grads.iter().zip(&mut self.velocity).enumerate() {
            v.data_mut().iter_mut().zip(g.data()).for_each(|(vi, &gi)| *vi = self.momentum * *vi + gi);
            let p = params.get_mut(slot);
            p.data_mut().iter_mut().zip(v.data()).for_each(|(pi, &vi)| *pi -= self.lr * vi);
        }
        Ok(())
    }
}

/// Adam: bias-corrected first and second moment estimates,
/// `p ← p − lr·m̂ / (√v̂ + ε)`.
#[derive(Debug, Clone)]
pub struct Adam<T: Real = f32> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(lr: T) -> Self {
        Self { lr, beta1: T::from_f64(0.9), beta2: T::from_f64(0.999), eps: T::from_f64(1e-8), t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Tensor<T>]) -> Result<()> {
        check_grads(params, grads)?;
        if self.m.len() != grads.len() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
            self.t = 0;
        }
        self.t += 1;
        let one = T::one();
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        for (slot, g) in grads.iter().enumerate() {
            let (m, v) = (self.m[slot].data_mut(), self.v[slot].data_mut());
            let p = params.get_mut(slot).data_mut();
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                *pi -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
