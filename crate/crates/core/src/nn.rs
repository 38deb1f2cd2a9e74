//! Small dense networks on `ndarray` with hand-written backward passes.
//!
//! Every trainable tensor is an `Array2<f64>`; biases are `1 x n` rows.
//! Batches are rows.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Anything with an ordered list of trainable tensors.
pub trait Parameters {
    fn params(&self) -> Vec<&Array2<f64>>;
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn zero_grads(&self) -> Vec<Array2<f64>> {
        self.params()
            .iter()
            .map(|p| Array2::zeros(p.raw_dim()))
            .collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

pub fn xavier_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..=limit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => z.clone(),
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
        }
    }

    /// Gradient through the activation given its output `y`.
    pub fn backward(self, y: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => grad.clone(),
            Activation::Relu => {
                let mut g = grad.clone();
                g.zip_mut_with(y, |g, &y| {
                    if y <= 0.0 {
                        *g = 0.0
                    }
                });
                g
            }
            Activation::Tanh => {
                let mut g = grad.clone();
                g.zip_mut_with(y, |g, &y| *g *= 1.0 - y * y);
                g
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    #[serde(with = "matrix")]
    pub w: Array2<f64>,
    #[serde(with = "matrix")]
    pub b: Array2<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, inp: usize, out: usize, activation: Activation) -> Dense {
        Dense {
            w: xavier_uniform(rng, inp, out),
            b: Array2::zeros((1, out)),
            activation,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.activation.apply(&(x.dot(&self.w) + &self.b))
    }
}

/// Activations retained from a forward pass; `outputs[0]` is the input.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub outputs: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("non-empty cache")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Hidden layers use ReLU; the last layer uses `out_activation`.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, sizes: &[usize], out_activation: Activation) -> Mlp {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { out_activation } else { Activation::Relu };
                Dense::new(rng, sizes[i], sizes[i + 1], act)
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("layers").w.ncols()
    }

    /// Multiply the last layer's weights, e.g. to start a policy near zero.
    pub fn scale_last(&mut self, factor: f64) {
        if let Some(l) = self.layers.last_mut() {
            l.w *= factor;
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.layers.iter().fold(x.clone(), |h, l| l.forward(&h))
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> MlpCache {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.clone());
        for l in &self.layers {
            let y = l.forward(outputs.last().expect("input pushed"));
            outputs.push(y);
        }
        MlpCache { outputs }
    }

    /// Accumulate parameter gradients into `grads` and return the gradient
    /// with respect to the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &Array2<f64>,
        grads: &mut [Array2<f64>],
    ) -> Array2<f64> {
        let mut g = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let dz = l.activation.backward(&cache.outputs[i + 1], &g);
            grads[2 * i] += &cache.outputs[i].t().dot(&dz);
            grads[2 * i + 1] += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            g = dz.dot(&l.w.t());
        }
        g
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}

/// ADAM with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    #[serde(with = "matrices")]
    m: Vec<Array2<f64>>,
    #[serde(with = "matrices")]
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new<P: Parameters + ?Sized>(net: &P, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: net.zero_grads(),
            v: net.zero_grads(),
        }
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, net: &mut P, grads: &[Array2<f64>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// θ' ← τθ + (1−τ)θ'.
pub fn soft_update<P: Parameters + ?Sized>(target: &mut P, source: &P, tau: f64) {
    for (t, s) in target.params_mut().into_iter().zip(source.params()) {
        t.zip_mut_with(s, |t, &s| *t = tau * s + (1.0 - tau) * *t);
    }
}

/// Row-major `(rows, cols, values)` encoding for checkpoints.
pub mod matrix {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    pub(crate) struct Raw {
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    }

    pub(crate) fn to_raw(m: &Array2<f64>) -> Raw {
        Raw {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.iter().copied().collect(),
        }
    }

    pub(crate) fn from_raw(r: Raw) -> Result<Array2<f64>, String> {
        Array2::from_shape_vec((r.rows, r.cols), r.values).map_err(|e| e.to_string())
    }

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_raw(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        from_raw(Raw::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

pub mod matrices {
    use super::matrix::{from_raw, to_raw, Raw};
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Array2<f64>], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(to_raw).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Array2<f64>>, D::Error> {
        Vec::<Raw>::deserialize(d)?
            .into_iter()
            .map(|r| from_raw(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Central-difference gradient of a scalar function of one parameter
/// tensor entry; used by gradient checks.
pub fn finite_difference<P, F>(net: &mut P, tensor: usize, index: (usize, usize), h: f64, f: F) -> f64
where
    P: Parameters + ?Sized,
    F: Fn(&P) -> f64,
{
    let orig = net.params()[tensor][index];
    net.params_mut()[tensor][index] = orig + h;
    let up = f(net);
    net.params_mut()[tensor][index] = orig - h;
    let down = f(net);
    net.params_mut()[tensor][index] = orig;
    (up - down) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest::proptest! {
        #[test]
        fn soft_update_stays_between_endpoints(seed in 0u64..1000, tau in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = Mlp::new(&mut rng, &[3, 4, 2], Activation::Tanh);
            let mut tgt = Mlp::new(&mut rng, &[3, 4, 2], Activation::Tanh);
            let before = tgt.clone();
            soft_update(&mut tgt, &src, tau);
            for ((t, s), b) in tgt.params().iter().zip(src.params()).zip(before.params()) {
                for ((t, s), b) in t.iter().zip(s.iter()).zip(b.iter()) {
                    proptest::prop_assert!(*t >= s.min(*b) - 1e-15 && *t <= s.max(*b) + 1e-15);
                }
            }
        }
    }

    fn loss(net: &Mlp, x: &Array2<f64>) -> f64 {
        net.forward(x).mapv(|v| v * v).sum() * 0.5
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for act in [Activation::Tanh, Activation::Identity] {
            let mut net = Mlp::new(&mut rng, &[5, 7, 6, 3], act);
            let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
            let cache = net.forward_cached(&x);
            let mut grads = net.zero_grads();
            let gx = net.backward(&cache, cache.output(), &mut grads);
            for t in 0..grads.len() {
                let (r, c) = grads[t].dim();
                for &(i, j) in &[(0, 0), (r - 1, c - 1), (r / 2, c / 2)] {
                    let fd = finite_difference(&mut net, t, (i, j), 1e-6, |n| loss(n, &x));
                    assert!(relative_error(fd, grads[t][(i, j)]) < 1e-5, "tensor {t}");
                }
            }
            let mut xp = x.clone();
            xp[(1, 2)] += 1e-6;
            let mut xm = x.clone();
            xm[(1, 2)] -= 1e-6;
            let fd = (loss(&net, &xp) - loss(&net, &xm)) / 2e-6;
            assert!(relative_error(fd, gx[(1, 2)]) < 1e-5);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&mut rng, &[2, 1], Activation::Identity);
        let before = net.clone();
        let mut opt = Adam::new(&net, 0.01);
        let grads = vec![array![[2.0], [-0.5]], array![[0.0]]];
        opt.step(&mut net, &grads);
        let dw = &net.layers[0].w - &before.layers[0].w;
        assert!((dw[(0, 0)] + 0.01).abs() < 1e-9);
        assert!((dw[(1, 0)] - 0.01).abs() < 1e-9);
        assert_eq!(net.layers[0].b, before.layers[0].b);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&mut rng, &[3, 1], Activation::Identity);
        let mut opt = Adam::new(&net, 0.05);
        let x = array![[1.0, 2.0, -1.0], [0.5, -1.0, 2.0], [0.0, 1.0, 1.0], [1.0, 0.0, 0.0]];
        let y = array![[1.0], [2.0], [3.0], [-1.0]];
        for _ in 0..5000 {
            let c = net.forward_cached(&x);
            let mut g = net.zero_grads();
            net.backward(&c, &(c.output() - &y), &mut g);
            opt.step(&mut net, &g);
        }
        let err = (&net.forward(&x) - &y).mapv(f64::abs).sum();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn soft_update_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Mlp::new(&mut rng, &[3, 4, 2], Activation::Tanh);
        let b = Mlp::new(&mut rng, &[3, 4, 2], Activation::Tanh);
        let mut t = b.clone();
        soft_update(&mut t, &a, 0.0);
        assert_eq!(t, b);
        soft_update(&mut t, &a, 1.0);
        assert_eq!(t, a);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(&mut rng, &[4, 8, 2], Activation::Tanh);
        let mut opt = Adam::new(&net, 1e-3);
        let mut n2 = net.clone();
        opt.step(&mut n2, &net.zero_grads().iter().map(|g| g + 0.3).collect::<Vec<_>>());
        let json = serde_json::to_string(&(n2.clone(), opt.clone())).unwrap();
        let (back, opt_back): (Mlp, Adam) = serde_json::from_str(&json).unwrap();
        assert_eq!(back, n2);
        assert_eq!(opt_back, opt);
    }
}
