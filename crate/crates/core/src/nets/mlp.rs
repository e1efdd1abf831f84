//! Plain relu MLPs: discriminator, actor and critic bodies.

use mata_tensor::{dot, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{CoreError, Result};

/// Fully connected relu network, linear on the last layer. Weights are
/// stored `out x in` as `{prefix}/W{i}` and `{prefix}/b{i}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    prefix: String,
    sizes: Vec<usize>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            prefix: prefix.into(),
            sizes: sizes.to_vec(),
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}/W{layer}", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}/b{layer}", self.prefix)
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for l in 0..self.layers() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            store.init_uniform(self.weight_name(l), &[out, fan_in], fan_in, rng);
            store.init_uniform(self.bias_name(l), &[out], fan_in, rng);
        }
    }

    pub fn init_zeros(&self, store: &mut ParamStore) {
        for l in 0..self.layers() {
            store.init_zeros(self.weight_name(l), &[self.sizes[l + 1], self.sizes[l]]);
            store.init_zeros(self.bias_name(l), &[self.sizes[l + 1]]);
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(CoreError::Contract(format!(
                "{} expects {} inputs, got {cols}",
                self.prefix,
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass, one sample per row.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        self.check_input(tape.value(x).cols())?;
        let mut h = x;
        for l in 0..self.layers() {
            let w = tape.param(store, &self.weight_name(l))?;
            let b = tape.param(store, &self.bias_name(l))?;
            h = tape.matmul_nt(h, w)?;
            h = tape.add_row(h, b)?;
            if l + 1 < self.layers() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Same computation without recording a tape. `x` is row-major,
    /// `rows x input_dim`.
    pub fn forward_plain(&self, store: &ParamStore, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_input(if rows == 0 { self.input_dim() } else { x.len() / rows })?;
        let mut h = x.to_vec();
        for l in 0..self.layers() {
            let w = store.require(&self.weight_name(l))?;
            let b = store.require(&self.bias_name(l))?;
            let relu = l + 1 < self.layers();
            h = dense(&h, rows, w, b, relu);
        }
        Ok(h)
    }
}

/// `relu?(x W^T + b)` for row-major `x` with `rows` rows.
pub fn dense(x: &[f64], rows: usize, w: &Tensor, b: &Tensor, relu: bool) -> Vec<f64> {
    let (out, inp) = (w.rows(), w.cols());
    let wd = w.data();
    if out < 8 || rows < 4 {
        let mut y = Vec::with_capacity(rows * out);
        for r in 0..rows {
            let xr = &x[r * inp..(r + 1) * inp];
            for o in 0..out {
                let v = b.data()[o] + dot(xr, &wd[o * inp..(o + 1) * inp]);
                y.push(if relu { v.max(0.0) } else { v });
            }
        }
        return y;
    }
    // W^T so each input feature updates a contiguous output row
    let mut wt = vec![0.0; inp * out];
    for o in 0..out {
        for k in 0..inp {
            wt[k * out + o] = wd[o * inp + k];
        }
    }
    let mut y = Vec::with_capacity(rows * out);
    for r in 0..rows {
        y.extend_from_slice(b.data());
        let yr = &mut y[r * out..(r + 1) * out];
        for (k, &xk) in x[r * inp..(r + 1) * inp].iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (yo, &wv) in yr.iter_mut().zip(&wt[k * out..(k + 1) * out]) {
                *yo += xk * wv;
            }
        }
        if relu {
            for v in yr.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    y
}
