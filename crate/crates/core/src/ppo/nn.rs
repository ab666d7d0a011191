//! Dense tanh MLP on a flat parameter slice, with explicit backpropagation.

use std::ops::Range;

use rand::Rng;

/// Layer widths `[input, hidden.., output]`. Hidden layers use tanh, the output is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
}

/// Activations of one forward pass. `acts[0]` is the input, the last entry the output.
#[derive(Debug, Clone)]
pub struct Cache {
    pub acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least input and output")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs an input and an output width");
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Weight and bias ranges of layer `l`; weights are row-major `[out][in]`.
    pub fn layer_ranges(&self, l: usize) -> (Range<usize>, Range<usize>) {
        let mut off = 0;
        for i in 0..l {
            off += self.sizes[i] * self.sizes[i + 1] + self.sizes[i + 1];
        }
        let w = self.sizes[l] * self.sizes[l + 1];
        (off..off + w, off + w..off + w + self.sizes[l + 1])
    }

    pub fn num_params(&self) -> usize {
        (0..self.num_layers())
            .map(|l| self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1])
            .sum()
    }

    /// Glorot-uniform weights, zero biases. The output layer is scaled by `out_gain`.
    pub fn init(&self, rng: &mut impl Rng, out_gain: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.num_params()];
        for l in 0..self.num_layers() {
            let (w, _) = self.layer_ranges(l);
            let (fan_in, fan_out) = (self.sizes[l] as f64, self.sizes[l + 1] as f64);
            let mut a = (6.0 / (fan_in + fan_out)).sqrt();
            if l + 1 == self.num_layers() {
                a *= out_gain;
            }
            for v in &mut p[w] {
                *v = rng.random_range(-a..=a);
            }
        }
        p
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Cache {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let (wr, br) = self.layer_ranges(l);
            let (w, b) = (&p[wr], &p[br]);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            let last = l + 1 == self.num_layers();
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        Cache { acts }
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
    pub fn backward(&self, p: &[f64], cache: &Cache, dout: &[f64], grad: &mut [f64]) {
        let mut delta = dout.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (wr, br) = self.layer_ranges(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[br.start + o] += d;
                let g = &mut grad[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let w = &p[wr];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (pi, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *pi += d * wi;
                }
            }
            // input to this layer is a tanh output h; dh/dz = 1 - h^2
            for (pi, h) in prev.iter_mut().zip(input) {
                *pi *= 1.0 - h * h;
            }
            delta = prev;
        }
    }

    /// `(name, shape, range)` per tensor, offset by `base`.
    pub fn tensors(&self, prefix: &str, base: usize) -> Vec<(String, Vec<usize>, Range<usize>)> {
        let mut out = Vec::new();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer_ranges(l);
            out.push((
                format!("{prefix}.{l}.weight"),
                vec![self.sizes[l + 1], self.sizes[l]],
                base + w.start..base + w.end,
            ));
            out.push((format!("{prefix}.{l}.bias"), vec![self.sizes[l + 1]], base + b.start..base + b.end));
        }
        out
    }
}
