use rand::Rng;
use rand_distr::StandardNormal;

/// Fully connected layer, `y = W x + b`, with `W` stored row-major as
/// `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-normal weights, zero bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(out.len(), self.outputs);
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.inputs))
            .zip(&self.bias)
        {
            *o = b + dot(row, x);
        }
    }

    /// Accumulates parameter gradients into `grad` and, when requested, writes
    /// the gradient with respect to the input into `grad_in`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Dense, grad_in: Option<&mut [f64]>) {
        for ((g, grow), gb) in grad_out
            .iter()
            .zip(grad.weight.chunks_exact_mut(self.inputs))
            .zip(grad.bias.iter_mut())
        {
            if *g == 0.0 {
                continue;
            }
            *gb += g;
            for (gw, xi) in grow.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
        if let Some(grad_in) = grad_in {
            grad_in.iter_mut().for_each(|v| *v = 0.0);
            for (g, row) in grad_out.iter().zip(self.weight.chunks_exact(self.inputs)) {
                if *g == 0.0 {
                    continue;
                }
                for (gi, w) in grad_in.iter_mut().zip(row) {
                    *gi += g * w;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Dense) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `ln(1 + e^z)`, written to stay finite for large `|z|`.
#[inline]
pub(crate) fn softplus_inplace(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0) + (-v.abs()).exp().ln_1p();
    }
}

/// Chain rule through softplus from its output `y`: the derivative is
/// `sigmoid(z) = 1 - e^-y`.
#[inline]
pub(crate) fn softplus_mask(grad: &mut [f64], activated: &[f64]) {
    for (g, y) in grad.iter_mut().zip(activated) {
        *g *= -(-y).exp_m1();
    }
}

/// Zeroes gradient entries whose post-activation value was clipped.
#[inline]
pub(crate) fn relu_mask(grad: &mut [f64], activated: &[f64]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
