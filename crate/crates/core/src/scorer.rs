//! Differentiable relevance scorers `f_w(q, d)` with exact gradients.
//!
//! Two architectures share one flat weight vector:
//!
//! ```text
//! BiEncoder   score = <E_q q, E_d d>
//!             weights = [E_q (hidden x dim, row-major), E_d (hidden x dim)]
//!
//! CrossMlp    score = u . tanh(W [q; d] + b) + c
//!             weights = [W (hidden x 2*dim, row-major), b (hidden), u (hidden), c]
//! ```
//!
//! The bi-encoder encodes queries and documents separately and meets them in
//! a dot product; the cross MLP reads the concatenated pair jointly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Half-width of the uniform initialisation interval.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    BiEncoder,
    CrossMlp,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bi_encoder" | "biencoder" | "bi-encoder" => Ok(Self::BiEncoder),
            "cross_mlp" | "crossmlp" | "cross-mlp" => Ok(Self::CrossMlp),
            other => Err(Error::Config(format!("unknown scorer kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerShape {
    pub kind: ScorerKind,
    pub input_dim: usize,
    pub hidden: usize,
}

impl ScorerShape {
    pub fn new(kind: ScorerKind, input_dim: usize, hidden: usize) -> Self {
        Self { kind, input_dim, hidden }
    }

    pub fn num_weights(&self) -> usize {
        let (h, n) = (self.hidden, self.input_dim);
        match self.kind {
            ScorerKind::BiEncoder => 2 * h * n,
            ScorerKind::CrossMlp => h * 2 * n + 2 * h + 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::Shape(format!(
                "input_dim and hidden must be positive (got {} and {})",
                self.input_dim, self.hidden
            )));
        }
        Ok(())
    }
}

/// The parameter vector `w` of a scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams<T> {
    shape: ScorerShape,
    weights: Vec<T>,
}

impl<T: Scalar> ScorerParams<T> {
    pub fn new(shape: ScorerShape, weights: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if weights.len() != shape.num_weights() {
            return Err(Error::Shape(format!(
                "{:?} with input_dim {} and hidden {} needs {} weights, got {}",
                shape.kind,
                shape.input_dim,
                shape.hidden,
                shape.num_weights(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite { layer: "weights" });
        }
        Ok(Self { shape, weights })
    }

    pub fn zeros(shape: ScorerShape) -> Result<Self> {
        Self::new(shape, vec![T::zero(); shape.num_weights()])
    }

    /// Uniform(-0.1, 0.1) per weight, deterministic in `seed`.
    pub fn init(shape: ScorerShape, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..shape.num_weights()).map(|_| T::lit(rng.random_range(-INIT_SCALE..INIT_SCALE))).collect();
        Self::new(shape, weights)
    }

    pub fn shape(&self) -> ScorerShape {
        self.shape
    }

    pub fn kind(&self) -> ScorerKind {
        self.shape.kind
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    fn check_inputs(&self, q: &[T], d: &[T]) -> Result<()> {
        let n = self.shape.input_dim;
        if q.len() != n || d.len() != n {
            return Err(Error::Shape(format!(
                "scorer expects {n} features per side, got query {} and document {}",
                q.len(),
                d.len()
            )));
        }
        Ok(())
    }

    /// `f_w(q, d)`.
    pub fn score(&self, q: &[T], d: &[T]) -> Result<T> {
        self.check_inputs(q, d)?;
        let s = self.forward(q, d);
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFinite { layer: "output" })
        }
    }

    /// Unchecked forward pass; inputs must match the shape.
    pub(crate) fn forward(&self, q: &[T], d: &[T]) -> T {
        let (h, n) = (self.shape.hidden, self.shape.input_dim);
        match self.shape.kind {
            ScorerKind::BiEncoder => {
                let (eq, ed) = self.weights.split_at(h * n);
                (0..h).map(|i| dot(&eq[i * n..(i + 1) * n], q) * dot(&ed[i * n..(i + 1) * n], d)).sum()
            }
            ScorerKind::CrossMlp => {
                let m = self.mlp_layout();
                let mut s = self.weights[m.c];
                for i in 0..h {
                    let row = &self.weights[i * 2 * n..(i + 1) * 2 * n];
                    let z = dot(&row[..n], q) + dot(&row[n..], d) + self.weights[m.b + i];
                    s = s + self.weights[m.u + i] * z.tanh();
                }
                s
            }
        }
    }

    fn mlp_layout(&self) -> MlpLayout {
        let (h, n) = (self.shape.hidden, self.shape.input_dim);
        let b = h * 2 * n;
        MlpLayout { b, u: b + h, c: b + 2 * h }
    }

    /// Adds `coeff * ∂f_w(q, d)/∂w` into `out`.
    pub fn accumulate_grad(&self, q: &[T], d: &[T], coeff: T, out: &mut [T]) -> Result<()> {
        self.check_inputs(q, d)?;
        if out.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, expected {}",
                out.len(),
                self.weights.len()
            )));
        }
        self.backward(q, d, coeff, out)
    }

    pub(crate) fn backward(&self, q: &[T], d: &[T], coeff: T, out: &mut [T]) -> Result<()> {
        if coeff == T::zero() {
            return Ok(());
        }
        let (h, n) = (self.shape.hidden, self.shape.input_dim);
        match self.shape.kind {
            ScorerKind::BiEncoder => {
                let (eq, ed) = self.weights.split_at(h * n);
                let (gq, gd) = out.split_at_mut(h * n);
                for i in 0..h {
                    let pq = dot(&eq[i * n..(i + 1) * n], q);
                    let pd = dot(&ed[i * n..(i + 1) * n], d);
                    if !pq.is_finite() {
                        return Err(Error::NonFinite { layer: "query projection" });
                    }
                    if !pd.is_finite() {
                        return Err(Error::NonFinite { layer: "document projection" });
                    }
                    let (cq, cd) = (coeff * pd, coeff * pq);
                    for j in 0..n {
                        gq[i * n + j] = gq[i * n + j] + cq * q[j];
                        gd[i * n + j] = gd[i * n + j] + cd * d[j];
                    }
                }
            }
            ScorerKind::CrossMlp => {
                let m = self.mlp_layout();
                for i in 0..h {
                    let row = &self.weights[i * 2 * n..(i + 1) * 2 * n];
                    let z = dot(&row[..n], q) + dot(&row[n..], d) + self.weights[m.b + i];
                    let a = z.tanh();
                    if !a.is_finite() {
                        return Err(Error::NonFinite { layer: "hidden" });
                    }
                    let u = self.weights[m.u + i];
                    out[m.u + i] = out[m.u + i] + coeff * a;
                    let dz = coeff * u * (T::one() - a * a);
                    out[m.b + i] = out[m.b + i] + dz;
                    let grow = &mut out[i * 2 * n..(i + 1) * 2 * n];
                    for j in 0..n {
                        grow[j] = grow[j] + dz * q[j];
                        grow[n + j] = grow[n + j] + dz * d[j];
                    }
                }
                out[m.c] = out[m.c] + coeff;
            }
        }
        Ok(())
    }

    /// Gradient of a loss defined over the scores of several pairs.
    ///
    /// `loss` receives the scores of `inputs` in order and returns the loss
    /// value together with `∂loss/∂score` for each input. The result is
    /// `(loss, ∂loss/∂w)`.
    pub fn grad<F>(&self, inputs: &[(&[T], &[T])], loss: F) -> Result<(T, Vec<T>)>
    where
        F: FnOnce(&[T]) -> (T, Vec<T>),
    {
        let scores = inputs.iter().map(|(q, d)| self.score(q, d)).collect::<Result<Vec<_>>>()?;
        let (value, dscores) = loss(&scores);
        if dscores.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "loss returned {} score derivatives for {} inputs",
                dscores.len(),
                inputs.len()
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { layer: "loss" });
        }
        let mut g = vec![T::zero(); self.weights.len()];
        for ((q, d), c) in inputs.iter().zip(dscores) {
            self.backward(q, d, c, &mut g)?;
        }
        Ok((value, g))
    }

    /// `w <- w - lr * grad`.
    pub fn sgd_step(&mut self, grad: &[T], lr: T) {
        debug_assert_eq!(grad.len(), self.weights.len());
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w = *w - lr * *g;
        }
    }

    /// `w <- w + lr * grad`.
    pub fn ascent_step(&mut self, grad: &[T], lr: T) {
        debug_assert_eq!(grad.len(), self.weights.len());
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w = *w + lr * *g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// Converts to another scalar width.
    pub fn cast<U: Scalar>(&self) -> ScorerParams<U> {
        ScorerParams { shape: self.shape, weights: self.weights.iter().map(|w| U::lit(w.as_f64())).collect() }
    }
}

struct MlpLayout {
    b: usize,
    u: usize,
    c: usize,
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// A frozen copy of the trained model `M` used as the distillation teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherSnapshot<T>(ScorerParams<T>);

impl<T: Scalar> TeacherSnapshot<T> {
    pub fn new(params: ScorerParams<T>) -> Self {
        Self(params)
    }

    pub fn params(&self) -> &ScorerParams<T> {
        &self.0
    }

    pub fn score(&self, q: &[T], d: &[T]) -> Result<T> {
        self.0.score(q, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::hinge;

    fn identity_bi(n: usize) -> ScorerParams<f64> {
        let shape = ScorerShape::new(ScorerKind::BiEncoder, n, n);
        let mut w = vec![0.0; shape.num_weights()];
        for i in 0..n {
            w[i * n + i] = 1.0;
            w[n * n + i * n + i] = 1.0;
        }
        ScorerParams::new(shape, w).unwrap()
    }

    #[test]
    fn identity_bi_encoder_is_dot_product() {
        let p = identity_bi(2);
        assert_eq!(p.score(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(p.score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(p.score(&[0.5, 2.0], &[4.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cross_mlp_forward_by_hand() {
        // hidden = 2, dim = 1; W = 0, b = (0.5, -1), u = (2, 3), c = 0.25
        let shape = ScorerShape::new(ScorerKind::CrossMlp, 1, 2);
        let w = vec![0.0, 0.0, 0.0, 0.0, 0.5, -1.0, 2.0, 3.0, 0.25];
        let p = ScorerParams::new(shape, w).unwrap();
        let expected = 2.0 * 0.5f64.tanh() + 3.0 * (-1.0f64).tanh() + 0.25;
        assert_eq!(p.score(&[7.0], &[-3.0]).unwrap(), expected);

        let zero = ScorerParams::<f64>::zeros(shape).unwrap();
        assert_eq!(zero.score(&[1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let p = identity_bi(2);
        assert!(matches!(p.score(&[1.0], &[1.0, 0.0]), Err(Error::Shape(_))));
        let shape = ScorerShape::new(ScorerKind::BiEncoder, 2, 2);
        assert!(ScorerParams::<f64>::new(shape, vec![0.0; 3]).is_err());
    }

    #[test]
    fn bilinear_gradient_matches_outer_product() {
        let p = ScorerParams::<f64>::init(ScorerShape::new(ScorerKind::BiEncoder, 3, 2), 3).unwrap();
        let (q, d) = ([0.3, -1.0, 2.0], [1.5, 0.5, -0.25]);
        let (_, g) = p.grad(&[(&q, &d)], |s| (s[0], vec![1.0])).unwrap();
        let (h, n) = (2, 3);
        let ed = &p.weights()[h * n..];
        for i in 0..h {
            let proj_d: f64 = (0..n).map(|j| ed[i * n + j] * d[j]).sum();
            for j in 0..n {
                assert!((g[i * n + j] - proj_d * q[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn inactive_hinge_gives_zero_gradient() {
        let p = ScorerParams::<f64>::init(ScorerShape::new(ScorerKind::CrossMlp, 3, 4), 9).unwrap();
        let (q, d) = ([0.1, 0.2, 0.3], [0.3, 0.2, 0.1]);
        let s = p.score(&q, &d).unwrap();
        let c = s + 1.0;
        let (l, g) = p.grad(&[(&q, &d)], |s| (hinge(s[0], c), vec![crate::scalar::hinge_slope(s[0], c)])).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn sgd_step_arithmetic() {
        let shape = ScorerShape::new(ScorerKind::CrossMlp, 1, 1);
        let mut p = ScorerParams::<f64>::new(shape, vec![1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let before = p.clone();
        p.sgd_step(&[0.0; 5], 0.3);
        assert_eq!(p, before);
        p.sgd_step(&[2.0, 0.0, 0.0, 0.0, 0.0], 0.5);
        assert_eq!(p.weights()[0], 0.0);
    }

    #[test]
    fn sgd_converges_on_convex_quadratic() {
        // loss = 0.5 * sum_i (w_i - t_i)^2, minimiser t.
        let shape = ScorerShape::new(ScorerKind::BiEncoder, 2, 1);
        let target = [0.7, -1.2, 3.0, 0.05];
        let mut p = ScorerParams::<f64>::zeros(shape).unwrap();
        for _ in 0..200 {
            let g: Vec<f64> = p.weights().iter().zip(&target).map(|(w, t)| w - t).collect();
            p.sgd_step(&g, 0.2);
        }
        for (w, t) in p.weights().iter().zip(&target) {
            assert!((w - t).abs() < 1e-6);
        }
    }

    #[test]
    fn ascent_equals_descent_with_negated_gradient() {
        let shape = ScorerShape::new(ScorerKind::CrossMlp, 2, 3);
        let base = ScorerParams::<f64>::init(shape, 5).unwrap();
        let g: Vec<f64> = (0..shape.num_weights()).map(|i| (i as f64 * 0.37).sin()).collect();
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut a = base.clone();
        a.ascent_step(&g, 0.01);
        let mut b = base;
        b.sgd_step(&neg, 0.01);
        assert_eq!(a, b);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let shape = ScorerShape::new(ScorerKind::CrossMlp, 4, 8);
        let a = ScorerParams::<f64>::init(shape, 11).unwrap();
        assert_eq!(a, ScorerParams::<f64>::init(shape, 11).unwrap());
        assert_ne!(a, ScorerParams::<f64>::init(shape, 12).unwrap());
        assert!(a.weights().iter().all(|w| w.abs() < INIT_SCALE));
    }

    #[test]
    fn f32_scorer_agrees_with_f64() {
        let shape = ScorerShape::new(ScorerKind::BiEncoder, 3, 3);
        let p64 = ScorerParams::<f64>::init(shape, 2).unwrap();
        let p32: ScorerParams<f32> = p64.cast();
        let s64 = p64.score(&[1.0, 2.0, 3.0], &[0.5, -0.5, 1.0]).unwrap();
        let s32 = p32.score(&[1.0, 2.0, 3.0], &[0.5, -0.5, 1.0]).unwrap();
        assert!((s64 - s32 as f64).abs() < 1e-6);
    }
}
