//! Minimal feedforward approximator: dense layers, ReLU hidden activations,
//! linear output, squared-error loss on a single selected output, plain SGD.
//!
//! This is the substrate for both Q-networks of an agent; `sync_target`
//! produces the frozen copy.

use rand::Rng;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    /// Row-major `out x in` weight matrix.
    w: Vec<f64>,
    b: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Layer {
    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        // one-hot state blocks make the first layer's input overwhelmingly
        // zero; fall back to a gather over active columns when it pays off
        let nonzero = input.iter().filter(|&&x| x != 0.0).count();
        if nonzero * 8 <= self.cols {
            out.extend_from_slice(&self.b);
            for (c, &xc) in input.iter().enumerate() {
                if xc == 0.0 {
                    continue;
                }
                for (r, o) in out.iter_mut().enumerate() {
                    *o += self.w[r * self.cols + c] * xc;
                }
            }
            return;
        }
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Weights, biases, and the SGD step size of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    pub learning_rate: f64,
    /// Per-component gradient clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl NetworkParams {
    /// Fresh network with weights uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    pub fn new(
        layer_sizes: &[usize],
        learning_rate: f64,
        grad_clip: Option<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Shape(
                "a network needs at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Shape("layer sizes must be nonzero".into()));
        }
        if !(learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (cols, rows) = (pair[0], pair[1]);
                let limit = 1.0 / (cols as f64).sqrt();
                Layer {
                    w: (0..rows * cols)
                        .map(|_| rng.random_range(-limit..=limit))
                        .collect(),
                    b: vec![0.0; rows],
                    rows,
                    cols,
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            learning_rate,
            grad_clip,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Mutable view of one layer's row-major weights (tests, hand-set nets).
    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.layers[layer].w
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.layers[layer].b
    }

    /// Flat copy of every parameter, weights then biases per layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            let wn = l.w.len();
            l.w.copy_from_slice(&flat[i..i + wn]);
            i += wn;
            let bn = l.b.len();
            l.b.copy_from_slice(&flat[i..i + bn]);
            i += bn;
        }
        debug_assert_eq!(i, flat.len());
    }

    /// Deterministic forward pass; ReLU on hidden layers, linear output.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input of length {} into a {}-wide first layer",
                input.len(),
                self.input_dim()
            )));
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// One SGD step on `(target - Q(input)[action])^2`. Only the selected
    /// action's error propagates. Returns the pre-step loss.
    pub fn train_step(&mut self, input: &[f64], action: usize, target: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::Training(format!("non-finite target {target}")));
        }
        if action >= self.output_dim() {
            return Err(Error::Shape(format!(
                "action {action} outside {} outputs",
                self.output_dim()
            )));
        }
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input of length {} into a {}-wide first layer",
                input.len(),
                self.input_dim()
            )));
        }

        // forward, keeping pre- and post-activation values per layer
        let last = self.layers.len() - 1;
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        post.push(input.to_vec());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward_into(post.last().unwrap(), &mut z);
            pre.push(z.clone());
            if i != last {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            post.push(z);
        }

        let q = post.last().unwrap()[action];
        let loss = (target - q) * (target - q);

        // backprop: delta over pre-activations, selected output only
        let mut delta = vec![0.0; self.output_dim()];
        delta[action] = 2.0 * (q - target);
        let clip = self.grad_clip;
        let alpha = self.learning_rate;
        for l in (0..self.layers.len()).rev() {
            // propagate before mutating this layer's weights
            let prev_delta = if l > 0 {
                let layer = &self.layers[l];
                let mut pd = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                    for (p, wi) in pd.iter_mut().zip(row) {
                        *p += wi * d;
                    }
                }
                for (p, z) in pd.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
                Some(pd)
            } else {
                None
            };

            let inp = &post[l];
            let layer = &mut self.layers[l];
            for r in 0..layer.rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &mut layer.w[r * layer.cols..(r + 1) * layer.cols];
                for (wi, xi) in row.iter_mut().zip(inp) {
                    if *xi != 0.0 {
                        *wi -= alpha * clipped(d * xi, clip);
                    }
                }
                layer.b[r] -= alpha * clipped(d, clip);
            }

            if let Some(pd) = prev_delta {
                delta = pd;
            }
        }
        Ok(loss)
    }
}

fn clipped(g: f64, clip: Option<f64>) -> f64 {
    match clip {
        Some(c) => g.clamp(-c, c),
        None => g,
    }
}

/// Independent value copy of a network for use as the frozen target.
pub fn sync_target(source: &NetworkParams) -> NetworkParams {
    source.clone()
}

/// Compares backprop against central finite differences on one small
/// randomized network and returns the worst relative error. Inputs whose
/// hidden pre-activations sit on the ReLU kink are redrawn.
pub fn gradient_self_check(seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let sizes = [4usize, 12, 5];
    for attempt in 0..32u64 {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ (attempt << 32));
        let base = NetworkParams::new(&sizes, 1.0, None, &mut rng).expect("valid sizes");
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let action = rng.random_range(0..sizes[2]);
        let target = rng.random_range(-1.0..1.0);

        let hidden = {
            let mut out = Vec::new();
            base.layers[0].forward_into(&x, &mut out);
            out
        };
        if hidden.iter().any(|z| z.abs() < 1e-3) {
            continue;
        }

        let before = base.flat_params();
        let mut stepped = base.clone();
        stepped
            .train_step(&x, action, target)
            .expect("finite target");
        let analytic: Vec<f64> = before
            .iter()
            .zip(stepped.flat_params())
            .map(|(b, a)| b - a)
            .collect();

        let h = 1e-6;
        let loss_at = |flat: &[f64]| {
            let mut probe = base.clone();
            probe.set_flat_params(flat);
            let q = probe.forward(&x).expect("shape fixed")[action];
            (target - q) * (target - q)
        };
        let mut worst: f64 = 0.0;
        for i in 0..before.len() {
            let mut plus = before.clone();
            plus[i] += h;
            let mut minus = before.clone();
            minus[i] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        return worst;
    }
    f64::INFINITY
}

// ---------------------------------------------------------------------------
// checkpoint format (version 1)
//
//   b"FGNN"                    magic
//   u32 LE                     version = 1
//   f64 LE                     learning_rate
//   u8                         1 if grad_clip present
//   f64 LE                     grad_clip value (0.0 when absent)
//   u32 LE                     number of layer sizes L (2..=64)
//   u32 LE * L                 layer sizes
//   per layer pair (L-1 of them):
//     f64 LE * (out*in)        weights, row-major
//     f64 LE * out             biases
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 4] = b"FGNN";
const CHECKPOINT_VERSION: u32 = 1;
const MAX_LAYERS: usize = 64;
const MAX_LAYER_WIDTH: usize = 1 << 20;
const MAX_TOTAL_PARAMS: usize = 1 << 26;

pub fn checkpoint_to_bytes(net: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&net.learning_rate.to_le_bytes());
    out.push(net.grad_clip.is_some() as u8);
    out.extend_from_slice(&net.grad_clip.unwrap_or(0.0).to_le_bytes());
    out.extend_from_slice(&(net.layer_sizes.len() as u32).to_le_bytes());
    for &s in &net.layer_sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for l in &net.layers {
        for v in l.w.iter().chain(&l.b) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Decode("checkpoint truncated".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<NetworkParams> {
    let mut c = Cursor {
        data: bytes,
        pos: 0,
    };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Decode("bad checkpoint magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Decode(format!("unsupported version {version}")));
    }
    let learning_rate = c.f64()?;
    if !(learning_rate > 0.0) || !learning_rate.is_finite() {
        return Err(Error::Decode(format!("bad learning rate {learning_rate}")));
    }
    let has_clip = c.u8()?;
    if has_clip > 1 {
        return Err(Error::Decode("bad grad_clip flag".into()));
    }
    let clip_value = c.f64()?;
    let grad_clip = if has_clip == 1 {
        if !(clip_value > 0.0) || !clip_value.is_finite() {
            return Err(Error::Decode(format!("bad grad clip {clip_value}")));
        }
        Some(clip_value)
    } else {
        None
    };
    let n_sizes = c.u32()? as usize;
    if !(2..=MAX_LAYERS).contains(&n_sizes) {
        return Err(Error::Decode(format!("implausible layer count {n_sizes}")));
    }
    let mut layer_sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        let s = c.u32()? as usize;
        if s == 0 || s > MAX_LAYER_WIDTH {
            return Err(Error::Decode(format!("implausible layer width {s}")));
        }
        layer_sizes.push(s);
    }
    let total: usize = layer_sizes
        .windows(2)
        .map(|p| p[0] * p[1] + p[1])
        .sum();
    if total > MAX_TOTAL_PARAMS {
        return Err(Error::Decode(format!("parameter count {total} too large")));
    }
    let mut layers = Vec::with_capacity(n_sizes - 1);
    for pair in layer_sizes.windows(2) {
        let (cols, rows) = (pair[0], pair[1]);
        let mut w = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let v = c.f64()?;
            if !v.is_finite() {
                return Err(Error::Decode("non-finite weight".into()));
            }
            w.push(v);
        }
        let mut b = Vec::with_capacity(rows);
        for _ in 0..rows {
            let v = c.f64()?;
            if !v.is_finite() {
                return Err(Error::Decode("non-finite bias".into()));
            }
            b.push(v);
        }
        layers.push(Layer { w, b, rows, cols });
    }
    if c.pos != bytes.len() {
        return Err(Error::Decode(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - c.pos
        )));
    }
    Ok(NetworkParams {
        layer_sizes,
        layers,
        learning_rate,
        grad_clip,
    })
}

pub fn save_checkpoint(net: &NetworkParams, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(net))?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<NetworkParams> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
