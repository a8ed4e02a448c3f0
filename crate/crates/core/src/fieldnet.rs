//! Fully connected scalar network `u(y; mu)` and boundary liftings.
//!
//! Parameters are stored in one flat vector, layer by layer, each layer as
//! its row-major weight matrix followed by its bias. Hidden layers apply the
//! activation; the output layer is affine.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diff::{sigmoid_f64, Dual2, EvalError, Jet, Real};
use crate::error::{Error, Result};

/// Points per chunk in batched evaluation.
pub const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<S: Real>(self, x: S) -> S {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }

    #[inline]
    pub(crate) fn value(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid_f64(x),
        }
    }

    /// First and second derivative expressed through the activation value `h`.
    #[inline]
    pub(crate) fn derivs_from_value(self, h: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let d1 = 1.0 - h * h;
                (d1, -2.0 * h * d1)
            }
            Activation::Sigmoid => {
                let d1 = h * (1.0 - h);
                (d1, d1 * (1.0 - 2.0 * h))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldNetParams {
    layer_sizes: Vec<usize>,
    activation: Activation,
    theta: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offs = vec![0];
    for w in sizes.windows(2) {
        let last = *offs.last().unwrap();
        offs.push(last + w[1] * w[0] + w[1]);
    }
    offs
}

impl FieldNetParams {
    /// Zero-initialized network with the given full layer sizes `q_0..q_l`.
    pub fn zeros(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("network needs at least two layers".into()));
        }
        if layer_sizes[0] < 2 {
            return Err(Error::Config("input width must be at least 2".into()));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Config("output width must be 1".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let offsets = layer_offsets(&layer_sizes);
        let n = *offsets.last().unwrap();
        Ok(Self {
            layer_sizes,
            activation,
            theta: vec![0.0; n],
            offsets,
        })
    }

    /// Network with `hidden` widths between an input of width `2 + n_mu` and a
    /// scalar output, weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(
        hidden: &[usize],
        n_mu: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![2 + n_mu];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = Self::zeros(sizes, activation)?;
        for k in 1..net.layer_sizes.len() {
            let bound = 1.0 / (net.layer_sizes[k - 1] as f64).sqrt();
            let (lo, hi) = (net.offsets[k - 1], net.offsets[k]);
            for p in &mut net.theta[lo..hi] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_mu(&self) -> usize {
        self.layer_sizes[0] - 2
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Flat index range of layer `k` (1-based): weights then bias.
    fn weight_range(&self, k: usize) -> (usize, usize) {
        let start = self.offsets[k - 1];
        (start, start + self.layer_sizes[k] * self.layer_sizes[k - 1])
    }

    pub fn weight(&self, k: usize, row: usize, col: usize) -> f64 {
        let (w0, _) = self.weight_range(k);
        self.theta[w0 + row * self.layer_sizes[k - 1] + col]
    }

    pub fn set_weight(&mut self, k: usize, row: usize, col: usize, v: f64) {
        let (w0, _) = self.weight_range(k);
        let idx = w0 + row * self.layer_sizes[k - 1] + col;
        self.theta[idx] = v;
    }

    pub fn bias(&self, k: usize, row: usize) -> f64 {
        let (_, b0) = self.weight_range(k);
        self.theta[b0 + row]
    }

    pub fn set_bias(&mut self, k: usize, row: usize, v: f64) {
        let (_, b0) = self.weight_range(k);
        self.theta[b0 + row] = v;
    }

    fn check_mu(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.n_mu() {
            return Err(Error::Config(format!(
                "network expects {} parameter inputs, got {}",
                self.n_mu(),
                mu.len()
            )));
        }
        Ok(())
    }

    /// `u(x; mu)`.
    pub fn forward(&self, x: [f64; 2], mu: &[f64]) -> Result<f64> {
        self.check_mu(mu)?;
        Ok(self.forward_generic(&self.theta, x, mu))
    }

    /// `u` with its spatial gradient.
    pub fn forward_jet(&self, x: [f64; 2], mu: &[f64]) -> Result<Jet> {
        self.check_mu(mu)?;
        let theta: Vec<Dual2> = self.theta.iter().map(|&p| Dual2::constant(p)).collect();
        let mu: Vec<Dual2> = mu.iter().map(|&m| Dual2::constant(m)).collect();
        Ok(self.forward_generic(&theta, Dual2::seed(x), &mu))
    }

    /// Forward pass over an arbitrary scalar type with externally supplied
    /// parameters laid out like [`FieldNetParams::params`].
    pub fn forward_generic<S: Real>(&self, theta: &[S], x: [S; 2], mu: &[S]) -> S {
        let mut cur: Vec<S> = Vec::with_capacity(self.layer_sizes[0]);
        cur.extend_from_slice(&x);
        cur.extend_from_slice(mu);
        let last = self.n_layers();
        for k in 1..=last {
            let (rows, cols) = (self.layer_sizes[k], self.layer_sizes[k - 1]);
            let (w0, b0) = self.weight_range(k);
            let mut next = Vec::with_capacity(rows);
            for r in 0..rows {
                let mut acc = theta[b0 + r];
                for (c, &h) in cur.iter().enumerate() {
                    acc = acc + theta[w0 + r * cols + c] * h;
                }
                next.push(if k < last {
                    self.activation.apply(acc)
                } else {
                    acc
                });
            }
            cur = next;
        }
        cur[0]
    }

    /// `v = alpha * u + beta` at `x` with the identity map (`y = x`).
    pub fn lifted_value(&self, lifting: &Lifting, x: [f64; 2], mu: &[f64]) -> Result<Jet> {
        let u = self.forward_jet(x, mu)?;
        let xd = Dual2::seed(x);
        Ok(lifting.combine(xd, xd, u)?)
    }

    /// Batched forward pass carrying the value and both input tangents.
    ///
    /// `mus` holds `n_mu` entries per point, point-major.
    pub fn forward_batch(&self, ys: &[[f64; 2]], mus: &[f64]) -> FieldTrace {
        let b = ys.len();
        let n_mu = self.n_mu();
        debug_assert_eq!(mus.len(), b * n_mu);
        let n_in = self.layer_sizes[0];
        let mut input = vec![0.0; n_in * b];
        for (i, y) in ys.iter().enumerate() {
            input[i] = y[0];
            input[b + i] = y[1];
            for m in 0..n_mu {
                input[(2 + m) * b + i] = mus[i * n_mu + m];
            }
        }
        let last = self.n_layers();
        let mut pre = Vec::with_capacity(last);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(last);
        let cols3 = 3 * b;
        for k in 1..=last {
            let (rows, cols) = (self.layer_sizes[k], self.layer_sizes[k - 1]);
            let (w0, b0) = self.weight_range(k);
            let w = &self.theta[w0..b0];
            let bias = &self.theta[b0..b0 + rows];
            let mut a = vec![0.0; rows * cols3];
            if k == 1 {
                for r in 0..rows {
                    let row = &mut a[r * cols3..(r + 1) * cols3];
                    let wr = &w[r * cols..(r + 1) * cols];
                    for i in 0..b {
                        let mut acc = bias[r];
                        for c in 0..cols {
                            acc += wr[c] * input[c * b + i];
                        }
                        row[i] = acc;
                    }
                    row[b..2 * b].fill(wr[0]);
                    row[2 * b..].fill(wr[1]);
                }
            } else {
                let h = &post[k - 2];
                // SAFETY: all slices are sized rows*cols, cols*cols3 and rows*cols3.
                unsafe {
                    matrixmultiply::dgemm(
                        rows,
                        cols,
                        cols3,
                        1.0,
                        w.as_ptr(),
                        cols as isize,
                        1,
                        h.as_ptr(),
                        cols3 as isize,
                        1,
                        0.0,
                        a.as_mut_ptr(),
                        cols3 as isize,
                        1,
                    );
                }
                for r in 0..rows {
                    for v in &mut a[r * cols3..r * cols3 + b] {
                        *v += bias[r];
                    }
                }
            }
            if k < last {
                let mut h = vec![0.0; rows * cols3];
                for r in 0..rows {
                    let base = r * cols3;
                    for i in 0..b {
                        let hv = self.activation.value(a[base + i]);
                        let (d1, _) = self.activation.derivs_from_value(hv);
                        h[base + i] = hv;
                        h[base + b + i] = d1 * a[base + b + i];
                        h[base + 2 * b + i] = d1 * a[base + 2 * b + i];
                    }
                }
                pre.push(a);
                post.push(h);
            } else {
                post.push(a);
            }
        }
        FieldTrace {
            b,
            input,
            pre,
            post,
        }
    }

    /// Values and input gradients at many points, evaluated in chunks.
    pub fn eval_many(&self, ys: &[[f64; 2]], mus: &[f64]) -> Result<Vec<Jet>> {
        let n_mu = self.n_mu();
        if mus.len() != ys.len() * n_mu {
            return Err(Error::Config(
                "parameter block does not match point count".into(),
            ));
        }
        let mut out = Vec::with_capacity(ys.len());
        for (c, chunk) in ys.chunks(BATCH).enumerate() {
            let m = &mus[c * BATCH * n_mu..(c * BATCH + chunk.len()) * n_mu];
            let tr = self.forward_batch(chunk, m);
            out.extend((0..chunk.len()).map(|i| Dual2::new(tr.u(i), tr.grad(i))));
        }
        Ok(out)
    }

    /// Reverse pass through [`FieldNetParams::forward_batch`].
    ///
    /// Given adjoints of `u` and of its input gradient `g` per point,
    /// accumulates the parameter gradient into `grad` and the adjoint of
    /// the spatial input into `ybar`.
    pub fn backward_batch(
        &self,
        trace: &FieldTrace,
        ubar: &[f64],
        gbar: &[[f64; 2]],
        grad: &mut [f64],
        ybar: &mut [[f64; 2]],
    ) {
        let b = trace.b;
        let cols3 = 3 * b;
        let last = self.n_layers();
        let mut cbar = vec![0.0; cols3];
        cbar[..b].copy_from_slice(ubar);
        for i in 0..b {
            cbar[b + i] = gbar[i][0];
            cbar[2 * b + i] = gbar[i][1];
        }
        for k in (1..=last).rev() {
            let (rows, cols) = (self.layer_sizes[k], self.layer_sizes[k - 1]);
            let (w0, b0) = self.weight_range(k);
            if k < last {
                // cbar holds the adjoint of the activation output; pull it
                // back through the activation and its tangent.
                let a = &trace.pre[k - 1];
                let h = &trace.post[k - 1];
                for r in 0..rows {
                    let base = r * cols3;
                    for i in 0..b {
                        let (d1, d2) = self.activation.derivs_from_value(h[base + i]);
                        let t1 = cbar[base + b + i];
                        let t2 = cbar[base + 2 * b + i];
                        cbar[base + i] = cbar[base + i] * d1
                            + (t1 * a[base + b + i] + t2 * a[base + 2 * b + i]) * d2;
                        cbar[base + b + i] = t1 * d1;
                        cbar[base + 2 * b + i] = t2 * d1;
                    }
                }
            }
            for r in 0..rows {
                grad[b0 + r] += cbar[r * cols3..r * cols3 + b].iter().sum::<f64>();
            }
            if k > 1 {
                let h = &trace.post[k - 2];
                let gw = &mut grad[w0..b0];
                // SAFETY: dimensions match the buffers allocated in forward_batch.
                unsafe {
                    matrixmultiply::dgemm(
                        rows,
                        cols3,
                        cols,
                        1.0,
                        cbar.as_ptr(),
                        cols3 as isize,
                        1,
                        h.as_ptr(),
                        1,
                        cols3 as isize,
                        1.0,
                        gw.as_mut_ptr(),
                        cols as isize,
                        1,
                    );
                }
                let w = &self.theta[w0..b0];
                let mut hbar = vec![0.0; cols * cols3];
                unsafe {
                    matrixmultiply::dgemm(
                        cols,
                        rows,
                        cols3,
                        1.0,
                        w.as_ptr(),
                        1,
                        cols as isize,
                        cbar.as_ptr(),
                        cols3 as isize,
                        1,
                        0.0,
                        hbar.as_mut_ptr(),
                        cols3 as isize,
                        1,
                    );
                }
                cbar = hbar;
            } else {
                let input = &trace.input;
                let w = &self.theta[w0..b0];
                for r in 0..rows {
                    let base = r * cols3;
                    for c in 0..cols {
                        let mut acc = 0.0;
                        for i in 0..b {
                            acc += cbar[base + i] * input[c * b + i];
                        }
                        grad[w0 + r * cols + c] += acc;
                    }
                    grad[w0 + r * cols] += cbar[base + b..base + 2 * b].iter().sum::<f64>();
                    grad[w0 + r * cols + 1] += cbar[base + 2 * b..base + 3 * b].iter().sum::<f64>();
                    for i in 0..b {
                        ybar[i][0] += w[r * cols] * cbar[base + i];
                        ybar[i][1] += w[r * cols + 1] * cbar[base + i];
                    }
                }
            }
        }
    }

    /// Checkpoint representation with nested row-major weight arrays.
    pub fn to_json(&self) -> Value {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 1..=self.n_layers() {
            let (rows, cols) = (self.layer_sizes[k], self.layer_sizes[k - 1]);
            let w: Vec<Vec<f64>> = (0..rows)
                .map(|r| (0..cols).map(|c| self.weight(k, r, c)).collect())
                .collect();
            weights.push(w);
            biases.push((0..rows).map(|r| self.bias(k, r)).collect::<Vec<_>>());
        }
        json!({
            "layer_sizes": self.layer_sizes,
            "activation": self.activation,
            "weights": weights,
            "biases": biases,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            layer_sizes: Vec<usize>,
            activation: Activation,
            weights: Vec<Vec<Vec<f64>>>,
            biases: Vec<Vec<f64>>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        let mut net = Self::zeros(raw.layer_sizes, raw.activation)?;
        let n = net.n_layers();
        if raw.weights.len() != n || raw.biases.len() != n {
            return Err(Error::Config("layer count mismatch in checkpoint".into()));
        }
        for k in 1..=n {
            let (rows, cols) = (net.layer_sizes[k], net.layer_sizes[k - 1]);
            let w = &raw.weights[k - 1];
            if w.len() != rows
                || w.iter().any(|r| r.len() != cols)
                || raw.biases[k - 1].len() != rows
            {
                return Err(Error::Config(format!("layer {k} has wrong shape")));
            }
            for r in 0..rows {
                for c in 0..cols {
                    net.set_weight(k, r, c, w[r][c]);
                }
                net.set_bias(k, r, raw.biases[k - 1][r]);
            }
        }
        Ok(net)
    }
}

/// Activations recorded by [`FieldNetParams::forward_batch`].
///
/// Each layer buffer has three column blocks of width `b`: values, then the
/// tangents along the first and second spatial input.
#[derive(Debug, Clone)]
pub struct FieldTrace {
    b: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl FieldTrace {
    pub fn len(&self) -> usize {
        self.b
    }

    pub fn is_empty(&self) -> bool {
        self.b == 0
    }

    pub fn u(&self, i: usize) -> f64 {
        self.post.last().unwrap()[i]
    }

    pub fn grad(&self, i: usize) -> [f64; 2] {
        let out = self.post.last().unwrap();
        [out[self.b + i], out[2 * self.b + i]]
    }
}

/// Boundary-condition lifting `v = alpha * u + beta`.
///
/// `alpha` and `beta` may depend on the reference point `x` and on its image
/// `y` under the domain map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lifting {
    /// `v = u`, boundary values left free.
    Identity,
    /// Homogeneous Dirichlet data on the circle of the given radius.
    Disk { radius: f64 },
    /// Homogeneous Dirichlet data on both circles of an annulus.
    Annulus { r_min: f64, r_max: f64 },
    /// `v = 1` on the ellipse `(y1/a)^2 + (y2/b)^2 = 1` in the mapped
    /// domain and `v = 0` on the reference circle of the given radius.
    Bernoulli { a: f64, b: f64, radius: f64 },
}

impl Lifting {
    pub fn alpha_beta<S: Real>(&self, x: [S; 2], y: [S; 2]) -> Result<(S, S), EvalError> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match *self {
            Lifting::Identity => Ok((S::one(), S::zero())),
            Lifting::Disk { radius } => Ok((-r2 + radius * radius, S::zero())),
            Lifting::Annulus { r_min, r_max } => {
                Ok(((-r2 + r_max * r_max) * (r2 - r_min * r_min), S::zero()))
            }
            Lifting::Bernoulli { a, b, radius } => {
                let ya = y[0] * (1.0 / a);
                let yb = y[1] * (1.0 / b);
                let phi_k = ya * ya + yb * yb - 1.0;
                let phi_b = r2 - radius * radius;
                let den = phi_b - phi_k;
                if den.val().abs() < 1e-12 {
                    return Err(EvalError::DivisionByZero);
                }
                Ok((phi_k * phi_b, phi_b / den))
            }
        }
    }

    /// Lifted value from the network output `u` evaluated at `y`.
    pub fn combine<S: Real>(
        &self,
        x: [Dual2<S>; 2],
        y: [Dual2<S>; 2],
        u: Dual2<S>,
    ) -> Result<Dual2<S>, EvalError> {
        match self {
            Lifting::Identity => Ok(u),
            _ => {
                let (alpha, beta) = self.alpha_beta(x, y)?;
                Ok(alpha * u + beta)
            }
        }
    }
}
