//! Symplectic map network built from alternating shear ("gradient") modules.
//!
//! A module with orientation `Up` maps `(x1, x2) -> (x1 + h(x2), x2)` and a
//! `Down` module maps `(x1, x2) -> (x1, x2 + h(x1))`, where
//! `h(s) = sum_i K_i a_i sigma(K_i s + b_i + (K_mu mu)_i)`.
//! Plain modules have no `K_mu`. Every module has a unit-triangular
//! Jacobian, so the composed map preserves area.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diff::Real;
use crate::error::{Error, Result};
use crate::fieldnet::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Up,
    Down,
}

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Borrowed view of one module's parameters.
#[derive(Debug, Clone, Copy)]
pub struct GradientModule<'a> {
    pub orientation: Orientation,
    pub k: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
    /// Row-major `q x n_mu`.
    pub k_mu: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SympNetParams {
    n_modules: usize,
    width: usize,
    n_mu: usize,
    activation: Activation,
    omega: Vec<f64>,
}

/// Per-module potential derivative `h`, `h'` and `h''` at `s`.
#[inline]
fn potential(act: Activation, m: &GradientModule<'_>, s: f64, shift: &[f64]) -> (f64, f64, f64) {
    let (mut h, mut h1, mut h2) = (0.0, 0.0, 0.0);
    for i in 0..m.k.len() {
        let k = m.k[i];
        let a = m.a[i];
        let sv = act.value(k * s + m.b[i] + shift[i]);
        let (d1, d2) = act.derivs_from_value(sv);
        let ka = k * a;
        h += ka * sv;
        h1 += ka * k * d1;
        h2 += ka * k * k * d2;
    }
    (h, h1, h2)
}

impl SympNetParams {
    /// All-zero network; every module is the identity.
    pub fn zeros(
        n_modules: usize,
        width: usize,
        n_mu: usize,
        activation: Activation,
    ) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("module width must be positive".into()));
        }
        let mut net = Self {
            n_modules,
            width,
            n_mu,
            activation,
            omega: Vec::new(),
        };
        net.omega = vec![0.0; n_modules * net.module_len()];
        Ok(net)
    }

    /// Near-identity random initialization.
    pub fn init<R: Rng + ?Sized>(
        n_modules: usize,
        width: usize,
        n_mu: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(n_modules, width, n_mu, activation)?;
        let s = 0.5 / (width as f64).sqrt();
        let q = width;
        let len = net.module_len();
        for m in 0..n_modules {
            let block = &mut net.omega[m * len..(m + 1) * len];
            for v in &mut block[..q] {
                *v = rng.random_range(-s..=s);
            }
            for v in &mut block[q..2 * q] {
                *v = rng.random_range(-0.01..=0.01);
            }
            for v in &mut block[2 * q..3 * q] {
                *v = rng.random_range(-s..=s);
            }
            for v in &mut block[3 * q..] {
                *v = rng.random_range(-0.01..=0.01);
            }
        }
        Ok(net)
    }

    pub fn is_parametric(&self) -> bool {
        self.n_mu > 0
    }

    pub fn n_modules(&self) -> usize {
        self.n_modules
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_mu(&self) -> usize {
        self.n_mu
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_params(&self) -> usize {
        self.omega.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.omega
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.omega
    }

    fn module_len(&self) -> usize {
        (3 + self.n_mu) * self.width
    }

    pub fn orientation(i: usize) -> Orientation {
        if i % 2 == 0 {
            Orientation::Up
        } else {
            Orientation::Down
        }
    }

    pub fn module(&self, i: usize) -> GradientModule<'_> {
        let q = self.width;
        let block = &self.omega[i * self.module_len()..(i + 1) * self.module_len()];
        GradientModule {
            orientation: Self::orientation(i),
            k: &block[..q],
            a: &block[q..2 * q],
            b: &block[2 * q..3 * q],
            k_mu: self.is_parametric().then(|| &block[3 * q..]),
        }
    }

    /// Mutable access to module `i` as `(K, a, b, K_mu)`; `K_mu` is empty for
    /// plain modules.
    pub fn module_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let q = self.width;
        let len = self.module_len();
        let block = &mut self.omega[i * len..(i + 1) * len];
        let (k, rest) = block.split_at_mut(q);
        let (a, rest) = rest.split_at_mut(q);
        let (b, kmu) = rest.split_at_mut(q);
        (k, a, b, kmu)
    }

    fn shift(&self, m: &GradientModule<'_>, mu: &[f64], out: &mut [f64]) {
        match m.k_mu {
            Some(kmu) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..self.n_mu).map(|j| kmu[i * self.n_mu + j] * mu[j]).sum();
                }
            }
            None => out.fill(0.0),
        }
    }

    fn check_mu(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.n_mu {
            return Err(Error::Config(format!(
                "map expects {} parameters, got {}",
                self.n_mu,
                mu.len()
            )));
        }
        Ok(())
    }

    /// Applies module `i` to `x`.
    pub fn module_apply(&self, i: usize, x: [f64; 2], mu: &[f64]) -> Result<[f64; 2]> {
        self.check_mu(mu)?;
        let m = self.module(i);
        let mut shift = vec![0.0; self.width];
        self.shift(&m, mu, &mut shift);
        Ok(match m.orientation {
            Orientation::Up => [x[0] + potential(self.activation, &m, x[1], &shift).0, x[1]],
            Orientation::Down => [x[0], x[1] + potential(self.activation, &m, x[0], &shift).0],
        })
    }

    pub fn apply(&self, x: [f64; 2], mu: &[f64]) -> Result<[f64; 2]> {
        Ok(self.forward_with_jacobian(x, mu)?.0)
    }

    pub fn jacobian(&self, x: [f64; 2], mu: &[f64]) -> Result<Mat2> {
        Ok(self.forward_with_jacobian(x, mu)?.1)
    }

    /// Image of `x` and the Jacobian there, as the product of the
    /// unit-triangular module Jacobians.
    pub fn forward_with_jacobian(&self, x: [f64; 2], mu: &[f64]) -> Result<([f64; 2], Mat2)> {
        self.check_mu(mu)?;
        let mut shift = vec![0.0; self.width];
        let (mut p, mut j) = (x, IDENTITY);
        for i in 0..self.n_modules {
            let m = self.module(i);
            self.shift(&m, mu, &mut shift);
            match m.orientation {
                Orientation::Up => {
                    let (h, h1, _) = potential(self.activation, &m, p[1], &shift);
                    p[0] += h;
                    j[0][0] += h1 * j[1][0];
                    j[0][1] += h1 * j[1][1];
                }
                Orientation::Down => {
                    let (h, h1, _) = potential(self.activation, &m, p[0], &shift);
                    p[1] += h;
                    j[1][0] += h1 * j[0][0];
                    j[1][1] += h1 * j[0][1];
                }
            }
        }
        Ok((p, j))
    }

    /// Closed-form inverse: undo each shear in reverse order.
    pub fn inverse(&self, y: [f64; 2], mu: &[f64]) -> Result<[f64; 2]> {
        self.check_mu(mu)?;
        let mut shift = vec![0.0; self.width];
        let mut p = y;
        for i in (0..self.n_modules).rev() {
            let m = self.module(i);
            self.shift(&m, mu, &mut shift);
            match m.orientation {
                Orientation::Up => p[0] -= potential(self.activation, &m, p[1], &shift).0,
                Orientation::Down => p[1] -= potential(self.activation, &m, p[0], &shift).0,
            }
        }
        Ok(p)
    }

    /// Forward pass over an arbitrary scalar type with externally supplied
    /// parameters laid out like [`SympNetParams::params`].
    pub fn apply_generic<S: Real>(&self, omega: &[S], x: [S; 2], mu: &[S]) -> [S; 2] {
        let q = self.width;
        let len = self.module_len();
        let mut p = x;
        for m in 0..self.n_modules {
            let block = &omega[m * len..(m + 1) * len];
            let s = match Self::orientation(m) {
                Orientation::Up => p[1],
                Orientation::Down => p[0],
            };
            let mut h = S::zero();
            for i in 0..q {
                let k = block[i];
                let mut z = k * s + block[2 * q + i];
                for j in 0..self.n_mu {
                    z = z + block[3 * q + i * self.n_mu + j] * mu[j];
                }
                h = h + k * block[q + i] * self.activation.apply(z);
            }
            match Self::orientation(m) {
                Orientation::Up => p[0] = p[0] + h,
                Orientation::Down => p[1] = p[1] + h,
            }
        }
        p
    }

    /// Reverse pass for one point: given adjoints of the image `pbar` and of
    /// the Jacobian `jbar`, accumulates the parameter gradient into `grad`
    /// and returns the adjoint of the input point.
    pub fn backward_point(
        &self,
        x: [f64; 2],
        mu: &[f64],
        pbar: [f64; 2],
        jbar: Mat2,
        grad: &mut [f64],
    ) -> [f64; 2] {
        let n = self.n_modules;
        let q = self.width;
        let len = self.module_len();
        let mut shifts = vec![0.0; n * q];
        let mut points = Vec::with_capacity(n);
        let mut jacs = Vec::with_capacity(n);
        let (mut p, mut j) = (x, IDENTITY);
        for i in 0..n {
            let m = self.module(i);
            self.shift(&m, mu, &mut shifts[i * q..(i + 1) * q]);
            points.push(p);
            jacs.push(j);
            let sh = &shifts[i * q..(i + 1) * q];
            match m.orientation {
                Orientation::Up => {
                    let (h, h1, _) = potential(self.activation, &m, p[1], sh);
                    p[0] += h;
                    j[0][0] += h1 * j[1][0];
                    j[0][1] += h1 * j[1][1];
                }
                Orientation::Down => {
                    let (h, h1, _) = potential(self.activation, &m, p[0], sh);
                    p[1] += h;
                    j[1][0] += h1 * j[0][0];
                    j[1][1] += h1 * j[0][1];
                }
            }
        }
        let (mut pb, mut jb) = (pbar, jbar);
        for i in (0..n).rev() {
            let m = self.module(i);
            let sh = &shifts[i * q..(i + 1) * q];
            // (changed coordinate, fixed coordinate) row indices.
            let (c, f) = match m.orientation {
                Orientation::Up => (0, 1),
                Orientation::Down => (1, 0),
            };
            let s = points[i][f];
            let jin = jacs[i];
            let hbar = pb[c];
            let h1bar = jb[c][0] * jin[f][0] + jb[c][1] * jin[f][1];
            let block = &mut grad[i * len..(i + 1) * len];
            let mut sbar = 0.0;
            let mut h1 = 0.0;
            for r in 0..q {
                let k = m.k[r];
                let a = m.a[r];
                let sv = self.activation.value(k * s + m.b[r] + sh[r]);
                let (d1, d2) = self.activation.derivs_from_value(sv);
                let e = hbar * k * a * d1 + h1bar * k * k * a * d2;
                sbar += e * k;
                h1 += k * k * a * d1;
                block[r] += e * s + hbar * a * sv + 2.0 * h1bar * k * a * d1;
                block[q + r] += hbar * k * sv + h1bar * k * k * d1;
                block[2 * q + r] += e;
                for jj in 0..self.n_mu {
                    block[3 * q + r * self.n_mu + jj] += e * mu[jj];
                }
            }
            pb[f] += sbar;
            jb[f][0] += h1 * jb[c][0];
            jb[f][1] += h1 * jb[c][1];
        }
        pb
    }

    /// Sum of squared distances between the image of each source point and
    /// its target.
    pub fn matching_loss(&self, pairs: &[([f64; 2], [f64; 2])], mu: &[f64]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Argument(
                "matching loss needs at least one pair".into(),
            ));
        }
        let mut acc = 0.0;
        for (x, t) in pairs {
            let y = self.apply(*x, mu)?;
            acc += (y[0] - t[0]).powi(2) + (y[1] - t[1]).powi(2);
        }
        Ok(acc)
    }

    /// Matching loss and its gradient with respect to the parameters.
    pub fn matching_loss_grad(
        &self,
        pairs: &[([f64; 2], [f64; 2])],
        mu: &[f64],
        grad: &mut [f64],
    ) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Argument(
                "matching loss needs at least one pair".into(),
            ));
        }
        self.check_mu(mu)?;
        let mut acc = 0.0;
        for (x, t) in pairs {
            let y = self.apply(*x, mu)?;
            let d = [y[0] - t[0], y[1] - t[1]];
            acc += d[0] * d[0] + d[1] * d[1];
            self.backward_point(*x, mu, [2.0 * d[0], 2.0 * d[1]], [[0.0; 2]; 2], grad);
        }
        Ok(acc)
    }

    pub fn to_json(&self) -> Value {
        let modules: Vec<Value> = (0..self.n_modules)
            .map(|i| {
                let m = self.module(i);
                let col = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
                let mut obj = json!({
                    "orientation": m.orientation,
                    "K": col(m.k),
                    "a": m.a,
                    "b": m.b,
                });
                if let Some(kmu) = m.k_mu {
                    let rows: Vec<Vec<f64>> = kmu.chunks(self.n_mu).map(<[f64]>::to_vec).collect();
                    obj["K_mu"] = json!(rows);
                }
                obj
            })
            .collect();
        json!({ "activation": self.activation, "modules": modules })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawModule {
            orientation: Orientation,
            #[serde(rename = "K")]
            k: Vec<Vec<f64>>,
            a: Vec<f64>,
            b: Vec<f64>,
            #[serde(rename = "K_mu", default)]
            k_mu: Option<Vec<Vec<f64>>>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            activation: Activation,
            modules: Vec<RawModule>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        let width = raw.modules.first().map_or(1, |m| m.k.len());
        let n_mu = raw
            .modules
            .first()
            .and_then(|m| m.k_mu.as_ref())
            .and_then(|k| k.first())
            .map_or(0, Vec::len);
        let mut net = Self::zeros(raw.modules.len(), width, n_mu, raw.activation)?;
        for (i, m) in raw.modules.iter().enumerate() {
            let bad = m.orientation != Self::orientation(i)
                || m.k.len() != width
                || m.k.iter().any(|r| r.len() != 1)
                || m.a.len() != width
                || m.b.len() != width
                || m.k_mu.as_ref().map_or(0, |k| k.first().map_or(0, Vec::len)) != n_mu
                || m.k_mu
                    .as_ref()
                    .is_some_and(|k| k.len() != width || k.iter().any(|r| r.len() != n_mu));
            if bad {
                return Err(Error::Config(format!("module {i} has inconsistent shape")));
            }
            let (k, a, b, kmu) = net.module_mut(i);
            for r in 0..width {
                k[r] = m.k[r][0];
                b[r] = m.b[r];
            }
            a.copy_from_slice(&m.a);
            if let Some(rows) = &m.k_mu {
                for (r, row) in rows.iter().enumerate() {
                    kmu[r * n_mu..(r + 1) * n_mu].copy_from_slice(row);
                }
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Dual2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Random parameters of order one, well beyond the near-identity init.
    fn random_net(n: usize, q: usize, n_mu: usize, act: Activation, seed: u64) -> SympNetParams {
        let mut r = rng(seed);
        let mut net = SympNetParams::zeros(n, q, n_mu, act).unwrap();
        for p in net.params_mut() {
            *p = r.random_range(-1.0..1.0);
        }
        net
    }

    fn dual_jacobian(net: &SympNetParams, x: [f64; 2], mu: &[f64]) -> Mat2 {
        let omega: Vec<Dual2> = net.params().iter().map(|&p| Dual2::constant(p)).collect();
        let mu: Vec<Dual2> = mu.iter().map(|&m| Dual2::constant(m)).collect();
        let y = net.apply_generic(&omega, Dual2::seed(x), &mu);
        [y[0].grad, y[1].grad]
    }

    #[test]
    fn zero_amplitude_module_is_identity() {
        let mut net = random_net(2, 5, 0, Activation::Tanh, 1);
        for i in 0..2 {
            net.module_mut(i).1.fill(0.0);
        }
        let x = [0.3, -1.7];
        assert_eq!(net.apply(x, &[]).unwrap(), x);
        let zero = SympNetParams::zeros(6, 4, 0, Activation::Sigmoid).unwrap();
        assert_eq!(zero.apply(x, &[]).unwrap(), x);
    }

    #[test]
    fn single_up_module_with_odd_activation() {
        let mut net = SympNetParams::zeros(1, 1, 0, Activation::Tanh).unwrap();
        let s = 0.8;
        {
            let (k, a, _, _) = net.module_mut(0);
            k[0] = 1.0;
            a[0] = s;
        }
        let t = 0.4;
        let y = net.module_apply(0, [0.0, t], &[]).unwrap();
        assert!((y[0] - s * t.tanh()).abs() < 1e-15);
        assert_eq!(y[1], t);
        assert_eq!(net.module_apply(0, [0.0, 0.0], &[]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn modules_fix_one_coordinate() {
        let net = random_net(2, 6, 0, Activation::Sigmoid, 2);
        let x = [0.7, -0.2];
        assert_eq!(net.module_apply(0, x, &[]).unwrap()[1], x[1]);
        assert_eq!(net.module_apply(1, x, &[]).unwrap()[0], x[0]);
    }

    /// Narrow tanh modules behave like linear shears for tiny amplitudes;
    /// the exact composition is checked through the Jacobian instead, which
    /// is linear in `h'` per module.
    #[test]
    fn two_module_jacobian_matches_shear_composition() {
        let mut net = SympNetParams::zeros(2, 1, 0, Activation::Tanh).unwrap();
        let (s, t) = (0.6, -1.3);
        for (i, amp) in [(0, s), (1, t)] {
            let (k, a, _, _) = net.module_mut(i);
            k[0] = 1.0;
            a[0] = amp;
        }
        // At the origin h' = amp * tanh'(0) = amp for both modules.
        let j = net.jacobian([0.0, 0.0], &[]).unwrap();
        let expect = [[1.0, s], [t, 1.0 + t * s]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[r][c] - expect[r][c]).abs() < 1e-15);
            }
        }
        let lin = [[1.0, 0.0], [t, 1.0]];
        let up = [[1.0, s], [0.0, 1.0]];
        assert_eq!(mat_mul(&lin, &up), expect);
    }

    #[test]
    fn single_up_jacobian_structure() {
        let net = random_net(1, 4, 0, Activation::Tanh, 3);
        let j = net.jacobian([0.2, 0.5], &[]).unwrap();
        assert_eq!(j[0][0], 1.0);
        assert_eq!(j[1][0], 0.0);
        assert_eq!(j[1][1], 1.0);
        assert_eq!(det(&j), 1.0);
    }

    #[test]
    fn analytic_jacobian_matches_dual_numbers() {
        for (n_mu, act) in [
            (0, Activation::Sigmoid),
            (0, Activation::Tanh),
            (1, Activation::Tanh),
        ] {
            let net = random_net(8, 10, n_mu, act, 4);
            let mu = vec![0.9; n_mu];
            let x = [0.3, -0.4];
            let a = net.jacobian(x, &mu).unwrap();
            let b = dual_jacobian(&net, x, &mu);
            for r in 0..2 {
                for c in 0..2 {
                    assert!((a[r][c] - b[r][c]).abs() <= 1e-12, "{a:?} vs {b:?}");
                }
            }
            assert_eq!(net.apply(x, &mu).unwrap(), {
                let om: Vec<f64> = net.params().to_vec();
                let y = net.apply_generic(&om, x, &mu);
                [y[0], y[1]]
            });
        }
    }

    #[test]
    fn determinant_is_one_at_many_points() {
        let net = random_net(8, 10, 0, Activation::Sigmoid, 5);
        let mut r = rng(6);
        for _ in 0..10_000 {
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let j = net.jacobian(x, &[]).unwrap();
            assert!((det(&j) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let net = random_net(8, 5, 1, Activation::Tanh, 7);
        let mut r = rng(8);
        for _ in 0..1000 {
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let mu = [r.random_range(0.5..1.5)];
            let y = net.apply(x, &mu).unwrap();
            let back = net.inverse(y, &mu).unwrap();
            assert!((back[0] - x[0]).abs() <= 1e-12 && (back[1] - x[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn parametric_with_zero_k_mu_matches_plain() {
        let mut r = rng(9);
        let mut plain = SympNetParams::zeros(4, 3, 0, Activation::Tanh).unwrap();
        let mut para = SympNetParams::zeros(4, 3, 2, Activation::Tanh).unwrap();
        for i in 0..4 {
            let kv: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let av: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let bv: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            for net in [&mut plain, &mut para] {
                let (k, a, b, kmu) = net.module_mut(i);
                k.copy_from_slice(&kv);
                a.copy_from_slice(&av);
                b.copy_from_slice(&bv);
                kmu.fill(0.0);
            }
        }
        for _ in 0..100 {
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let mu = [r.random_range(0.0..2.0), r.random_range(-1.0..1.0)];
            assert_eq!(plain.apply(x, &[]).unwrap(), para.apply(x, &mu).unwrap());
        }
    }

    #[test]
    fn matching_loss_examples() {
        let id = SympNetParams::zeros(4, 2, 0, Activation::Tanh).unwrap();
        assert_eq!(
            id.matching_loss(&[([1.0, 0.0], [2.0, 0.0])], &[]).unwrap(),
            1.0
        );
        let net = random_net(3, 2, 0, Activation::Tanh, 10);
        let x = [0.1, 0.5];
        let t = net.apply(x, &[]).unwrap();
        assert_eq!(net.matching_loss(&[(x, t)], &[]).unwrap(), 0.0);
        assert!(matches!(
            net.matching_loss(&[], &[]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn backward_matches_tape() {
        use crate::diff::{loss_param_gradient, Var};
        for (n_mu, act) in [(0, Activation::Sigmoid), (2, Activation::Tanh)] {
            let net = random_net(5, 3, n_mu, act, 11);
            let mu: Vec<f64> = (0..n_mu).map(|j| 0.7 + 0.3 * j as f64).collect();
            let x = [0.35, -0.6];
            let pbar = [0.8, -1.1];
            let jbar = [[0.3, -0.7], [1.2, 0.4]];
            let mut grad = vec![0.0; net.n_params()];
            let xbar = net.backward_point(x, &mu, pbar, jbar, &mut grad);
            let (_, g) = loss_param_gradient(net.params(), |om| {
                let om_d: Vec<Dual2<Var>> = om.iter().map(|&p| Dual2::constant(p)).collect();
                let mu_d: Vec<Dual2<Var>> = mu.iter().map(|&m| Dual2::cst(m)).collect();
                let y =
                    net.apply_generic(&om_d, Dual2::seed([Var::cst(x[0]), Var::cst(x[1])]), &mu_d);
                let mut acc = y[0].value * pbar[0] + y[1].value * pbar[1];
                for r in 0..2 {
                    for c in 0..2 {
                        acc = acc + y[r].grad[c] * jbar[r][c];
                    }
                }
                Ok(acc)
            })
            .unwrap();
            for (a, b) in grad.iter().zip(&g) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
            // Input adjoint against second-order duals.
            let om: Vec<Dual2> = net.params().iter().map(|&p| Dual2::constant(p)).collect();
            let mu_d: Vec<Dual2> = mu.iter().map(|&m| Dual2::cst(m)).collect();
            let y = net.apply_generic(&om, Dual2::seed_second_order(x), &mu_d);
            let mut expect = [0.0; 2];
            for r in 0..2 {
                let h = y[r].hess.unwrap();
                expect[0] += pbar[r] * y[r].grad[0] + jbar[r][0] * h[0] + jbar[r][1] * h[1];
                expect[1] += pbar[r] * y[r].grad[1] + jbar[r][0] * h[1] + jbar[r][1] * h[2];
            }
            for k in 0..2 {
                assert!(
                    (xbar[k] - expect[k]).abs() <= 1e-12,
                    "{xbar:?} vs {expect:?}"
                );
            }
        }
    }

    #[test]
    fn json_round_trip() {
        for n_mu in [0, 1] {
            let net = SympNetParams::init(4, 3, n_mu, Activation::Sigmoid, &mut rng(12)).unwrap();
            let v = net.to_json();
            assert_eq!(v["modules"][0]["K_mu"].is_null(), n_mu == 0);
            let back = SympNetParams::from_json(&v).unwrap();
            assert_eq!(back, net);
        }
    }

    #[test]
    fn init_is_near_identity() {
        let net = SympNetParams::init(8, 10, 0, Activation::Sigmoid, &mut rng(13)).unwrap();
        let y = net.apply([0.5, 0.5], &[]).unwrap();
        assert!((y[0] - 0.5).abs() < 0.05 && (y[1] - 0.5).abs() < 0.05);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn area_preserving_and_invertible(
                seed in any::<u64>(),
                n in 1usize..9,
                q in 1usize..11,
                n_mu in 0usize..3,
                tanh in any::<bool>(),
                x in (-1.0f64..1.0, -1.0f64..1.0),
                mu in prop::collection::vec(0.5f64..2.0, 2),
            ) {
                let act = if tanh { Activation::Tanh } else { Activation::Sigmoid };
                let net = random_net(n, q, n_mu, act, seed);
                let mu = &mu[..n_mu];
                let x = [x.0, x.1];
                let (y, j) = net.forward_with_jacobian(x, mu).unwrap();
                prop_assert!((det(&j) - 1.0).abs() <= 1e-12, "det {}", det(&j));
                let back = net.inverse(y, mu).unwrap();
                prop_assert!((back[0] - x[0]).abs() <= 1e-12 && (back[1] - x[1]).abs() <= 1e-12);
            }

            #[test]
            fn zero_parameter_coupling_drops_mu(
                seed in any::<u64>(),
                x in (-1.0f64..1.0, -1.0f64..1.0),
                mu in (0.0f64..2.0, -1.0f64..1.0),
            ) {
                let mut r = rng(seed);
                let mut plain = SympNetParams::zeros(3, 4, 0, Activation::Sigmoid).unwrap();
                let mut para = SympNetParams::zeros(3, 4, 2, Activation::Sigmoid).unwrap();
                for i in 0..3 {
                    let kv: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
                    let av: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
                    let bv: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
                    for net in [&mut plain, &mut para] {
                        let (k, a, b, _) = net.module_mut(i);
                        k.copy_from_slice(&kv);
                        a.copy_from_slice(&av);
                        b.copy_from_slice(&bv);
                    }
                }
                let x = [x.0, x.1];
                prop_assert_eq!(plain.apply(x, &[]).unwrap(), para.apply(x, &[mu.0, mu.1]).unwrap());
            }
        }
    }
}
