//! Dense layers over row-major sample batches, with explicit backward passes.
//!
//! A batch of `n` samples with `d` features is a `&[f64]` of length `n * d`.
//! Matrix products go through `matrixmultiply`; everything else is plain
//! loops.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// `c = a * b + beta * c` for an `m x k` by `k x n` product with explicit
/// row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len(), "gemm: lhs too short");
        assert!(last(k, n, rsb, csb) < b.len(), "gemm: rhs too short");
    }
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: output too short");
    // SAFETY: every index touched by the kernel is bounded by the asserts
    // above, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    /// `sin(omega * z)`, as in sinusoidal representation networks.
    Sine { omega: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sine { omega } => libm::sin(omega * z),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sine { omega } => omega * libm::cos(omega * z),
        }
    }
}

/// Fully connected layer `y = x W^T + b`, `W` stored `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights and biases drawn from `U(-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, bound: f64, rng: &mut R) -> Self {
        let mut draw = || rng.gen_range(-bound..=bound);
        let weight = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Linear {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), n * self.inputs);
        let mut y = Vec::with_capacity(n * self.outputs);
        for _ in 0..n {
            y.extend_from_slice(&self.bias);
        }
        gemm(
            n,
            self.inputs,
            self.outputs,
            x,
            (self.inputs, 1),
            &self.weight,
            (1, self.inputs),
            1.0,
            &mut y,
            (self.outputs, 1),
        );
        y
    }

    /// Accumulate parameter gradients into `grad` and, if requested, return
    /// the gradient with respect to the layer input.
    pub fn backward(&self, x: &[f64], dy: &[f64], n: usize, grad: &mut Linear, want_dx: bool) -> Option<Vec<f64>> {
        debug_assert_eq!(dy.len(), n * self.outputs);
        gemm(
            self.outputs,
            n,
            self.inputs,
            dy,
            (1, self.outputs),
            x,
            (self.inputs, 1),
            1.0,
            &mut grad.weight,
            (self.inputs, 1),
        );
        for row in dy.chunks_exact(self.outputs) {
            for (g, d) in grad.bias.iter_mut().zip(row) {
                *g += d;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; n * self.inputs];
            gemm(
                n,
                self.outputs,
                self.inputs,
                dy,
                (self.outputs, 1),
                &self.weight,
                (self.inputs, 1),
                0.0,
                &mut dx,
                (self.inputs, 1),
            );
            dx
        })
    }
}

/// Forward record of a plain multilayer perceptron: hidden layers use the
/// given activation, the last layer is left linear.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// Input to every layer.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of every hidden layer.
    pub pre: Vec<Vec<f64>>,
    /// Linear output of the last layer.
    pub output: Vec<f64>,
}

pub fn mlp_forward(layers: &[Linear], act: Activation, x: Vec<f64>, n: usize) -> MlpCache {
    let mut cache = MlpCache::default();
    let mut current = x;
    for (i, layer) in layers.iter().enumerate() {
        let z = layer.forward(&current, n);
        cache.inputs.push(current);
        if i + 1 == layers.len() {
            cache.output = z;
            break;
        }
        current = z.iter().map(|&v| act.apply(v)).collect();
        cache.pre.push(z);
    }
    cache
}

/// Back-propagate `d_out` (gradient w.r.t. the last layer's linear output).
pub fn mlp_backward(
    layers: &[Linear],
    act: Activation,
    cache: &MlpCache,
    d_out: Vec<f64>,
    n: usize,
    grads: &mut [Linear],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let mut d = d_out;
    for i in (0..layers.len()).rev() {
        let need = want_dx || i > 0;
        let dx = layers[i].backward(&cache.inputs[i], &d, n, &mut grads[i], need);
        if i == 0 {
            return dx;
        }
        let mut dx = dx.expect("requested");
        for (g, &z) in dx.iter_mut().zip(&cache.pre[i - 1]) {
            *g *= act.derivative(z);
        }
        d = dx;
    }
    None
}

/// Row-wise concatenation `[a | b]` of `n x da` and `n x db` blocks.
pub fn concat_cols(a: &[f64], da: usize, b: &[f64], db: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

/// Add the first `da` columns of `src` (`n x (da + db)`) into `dst` (`n x da`)
/// and return the trailing `db` columns.
pub fn split_cols_accumulate(src: &[f64], da: usize, db: usize, n: usize, dst: &mut [f64]) -> Vec<f64> {
    let w = da + db;
    let mut tail = Vec::with_capacity(n * db);
    for i in 0..n {
        let row = &src[i * w..(i + 1) * w];
        for (d, s) in dst[i * da..(i + 1) * da].iter_mut().zip(&row[..da]) {
            *d += s;
        }
        tail.extend_from_slice(&row[da..]);
    }
    tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(layer: &Linear, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = vec![0.0; n * layer.outputs];
        for s in 0..n {
            for o in 0..layer.outputs {
                let mut acc = layer.bias[o];
                for i in 0..layer.inputs {
                    acc += layer.weight[o * layer.inputs + i] * x[s * layer.inputs + i];
                }
                y[s * layer.outputs + o] = acc;
            }
        }
        y
    }

    #[test]
    fn linear_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Linear::uniform(7, 5, 1.0, &mut rng);
        let x: Vec<f64> = (0..4 * 7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = layer.forward(&x, 4);
        for (a, b) in y.iter().zip(naive(&layer, &x, 4)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layers = vec![Linear::uniform(3, 6, 0.8, &mut rng), Linear::uniform(6, 2, 0.8, &mut rng)];
        let act = Activation::Sine { omega: 1.3 };
        let n = 3;
        let x: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let objective = |layers: &[Linear], x: &[f64]| -> f64 {
            mlp_forward(layers, act, x.to_vec(), n).output.iter().enumerate().map(|(i, v)| v * (i as f64 + 1.0)).sum()
        };
        let cache = mlp_forward(&layers, act, x.clone(), n);
        let d_out: Vec<f64> = (0..cache.output.len()).map(|i| i as f64 + 1.0).collect();
        let mut grads: Vec<Linear> = layers.iter().map(|l| Linear::zeros(l.inputs, l.outputs)).collect();
        let dx = mlp_backward(&layers, act, &cache, d_out, n, &mut grads, true).unwrap();
        let h = 1e-6;
        for li in 0..2 {
            for wi in 0..layers[li].weight.len() {
                let mut p = layers.clone();
                p[li].weight[wi] += h;
                let mut m = layers.clone();
                m[li].weight[wi] -= h;
                let fd = (objective(&p, &x) - objective(&m, &x)) / (2.0 * h);
                assert!((fd - grads[li].weight[wi]).abs() < 1e-6);
            }
        }
        for i in 0..x.len() {
            let mut p = x.clone();
            p[i] += h;
            let mut m = x.clone();
            m[i] -= h;
            let fd = (objective(&layers, &p) - objective(&layers, &m)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn concat_and_split_are_inverse() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [9.0, 8.0];
        let c = concat_cols(&a, 2, &b, 1, 2);
        assert_eq!(c, [1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let mut dst = [0.0; 4];
        let tail = split_cols_accumulate(&c, 2, 1, 2, &mut dst);
        assert_eq!(dst, a);
        assert_eq!(tail, b);
    }
}
