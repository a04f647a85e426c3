use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embed::TextEmbedder;
use crate::distribution_grid::DistributionGrid;
use crate::{decode_f64s, encode_f64s, Error, Result};

/// Floor inside the log-probability skip feature.
pub const SKIP_FLOOR: f64 = 1e-30;

/// Standard normal draw by Box-Muller.
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub g: usize,
    pub k: usize,
    pub embed_dim: usize,
    pub width: usize,
    /// Number of residual layers after the input layer.
    pub depth: usize,
    pub hash_seed: u64,
}

impl ModelConfig {
    pub fn new(g: usize, k: usize) -> Self {
        Self {
            g,
            k,
            embed_dim: super::embed::DEFAULT_EMBED_DIM,
            width: 64,
            depth: 2,
            hash_seed: super::embed::DEFAULT_HASH_SEED,
        }
    }

    pub fn cells(&self) -> usize {
        self.g.pow(3)
    }

    /// Per-cell input: own row, text scalar, neighbour mean row.
    pub fn input_dim(&self) -> usize {
        2 * self.k + 1
    }

    fn validate(&self) -> Result<()> {
        if self.g == 0 || self.k == 0 || self.embed_dim == 0 || self.width == 0 {
            return Err(Error::Config(format!("invalid model dimensions {self:?}")));
        }
        Ok(())
    }
}

/// Affine map from the text embedding to one scalar per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    /// cells × embed_dim, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Projector {
    pub fn project(&self, b: &[f64]) -> Vec<f64> {
        let d = b.len();
        self.bias
            .iter()
            .enumerate()
            .map(|(i, &bias)| {
                bias + dot(&self.weight[i * d..(i + 1) * d], b)
            })
            .collect()
    }
}

/// Per-cell network shared by all cells: input layer, residual layers, softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualPredictor {
    /// input_dim × width; column j holds the weights of input feature j.
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    /// Per residual layer, width × width row-major (out, in).
    pub w_res: Vec<Vec<f64>>,
    pub b_res: Vec<Vec<f64>>,
    /// k × width row-major.
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
    /// Weight of the log-probability skip from the previous row to the logits.
    pub skip: f64,
}

/// Text embedder, projector and predictor with their dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalModel {
    pub config: ModelConfig,
    pub embedder: TextEmbedder,
    pub projector: Projector,
    pub predictor: ResidualPredictor,
}

/// Names of the parameter groups in storage and gradient order.
pub fn group_names(depth: usize) -> Vec<String> {
    let mut names = vec!["proj.weight".to_string(), "proj.bias".into(), "in.weight".into(), "in.bias".into()];
    for l in 0..depth {
        names.push(format!("res{l}.weight"));
        names.push(format!("res{l}.bias"));
    }
    names.extend(["out.weight".to_string(), "out.bias".into(), "skip".into()]);
    names
}

/// Dot product with independent partial sums, so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; LANES];
    let chunks = n / LANES;
    for c in 0..chunks {
        let (x, y) = (&a[c * LANES..(c + 1) * LANES], &b[c * LANES..(c + 1) * LANES]);
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * LANES..n {
        tail += a[i] * b[i];
    }
    acc.iter().sum::<f64>() + tail
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

#[inline]
fn silu(a: f64) -> f64 {
    a * sigmoid(a)
}

#[inline]
fn silu_grad(a: f64) -> f64 {
    let s = sigmoid(a);
    s * (1.0 + a * (1.0 - s))
}

impl ConditionalModel {
    /// All parameters zero: every prediction is uniform.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (n, d, w, k) = (config.cells(), config.embed_dim, config.width, config.k);
        Ok(Self {
            config,
            embedder: TextEmbedder::new(d, config.hash_seed),
            projector: Projector {
                weight: vec![0.0; n * d],
                bias: vec![0.0; n],
            },
            predictor: ResidualPredictor {
                w_in: vec![0.0; config.input_dim() * w],
                b_in: vec![0.0; w],
                w_res: vec![vec![0.0; w * w]; config.depth],
                b_res: vec![vec![0.0; w]; config.depth],
                w_out: vec![0.0; k * w],
                b_out: vec![0.0; k],
                skip: 0.0,
            },
        })
    }

    /// Hidden weights drawn from N(0, scale²/fan_in); projector, head and skip
    /// start at zero, so the initial prediction is still uniform.
    pub fn init(config: ModelConfig, scale: f64, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = (config.input_dim() as f64).sqrt();
        m.predictor.w_in.iter_mut().for_each(|v| *v = scale * normal(&mut rng) / fan_in);
        let fan_res = (config.width as f64).sqrt();
        for layer in &mut m.predictor.w_res {
            layer.iter_mut().for_each(|v| *v = scale * normal(&mut rng) / fan_res);
        }
        Ok(m)
    }

    /// Parameter groups in [`group_names`] order.
    pub fn groups(&self) -> Vec<&[f64]> {
        let p = &self.predictor;
        let mut out: Vec<&[f64]> = vec![&self.projector.weight, &self.projector.bias, &p.w_in, &p.b_in];
        for l in 0..p.w_res.len() {
            out.push(&p.w_res[l]);
            out.push(&p.b_res[l]);
        }
        out.push(&p.w_out);
        out.push(&p.b_out);
        out.push(std::slice::from_ref(&p.skip));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let p = &mut self.predictor;
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.projector.weight,
            &mut self.projector.bias,
            &mut p.w_in,
            &mut p.b_in,
        ];
        for (w, b) in p.w_res.iter_mut().zip(p.b_res.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out.push(&mut p.w_out);
        out.push(&mut p.b_out);
        out.push(std::slice::from_mut(&mut p.skip));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        self.embedder.embed(text)
    }

    /// C = Φ(B).
    pub fn project(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.config.embed_dim {
            return Err(Error::Dimension(format!(
                "embedding has {} entries, model expects {}",
                b.len(),
                self.config.embed_dim
            )));
        }
        Ok(self.projector.project(b))
    }

    fn check_grid(&self, z: &DistributionGrid) -> Result<()> {
        if z.g() != self.config.g || z.k() != self.config.k {
            return Err(Error::Dimension(format!(
                "grid (g={}, K={}) does not match model (g={}, K={})",
                z.g(),
                z.k(),
                self.config.g,
                self.config.k
            )));
        }
        Ok(())
    }

    /// Z_t = Ψ([Z_{t−1}, C]).
    pub fn predict(&self, z_prev: &DistributionGrid, c: &[f64]) -> Result<DistributionGrid> {
        self.check_grid(z_prev)?;
        if c.len() != self.config.cells() {
            return Err(Error::Dimension(format!("C has {} cells, expected {}", c.len(), self.config.cells())));
        }
        let k = self.config.k;
        let nb = neighbor_means(z_prev);
        let mut ws = Workspace::new(&self.config);
        let mut probs = Vec::with_capacity(z_prev.probs().len());
        for cell in 0..self.config.cells() {
            self.forward_cell(&mut ws, z_prev.row(cell), c[cell], &nb[cell * k..(cell + 1) * k]);
            probs.extend_from_slice(&ws.p);
        }
        DistributionGrid::from_weights(self.config.g, k, probs)
    }

    /// Embeds, projects and predicts in one call.
    pub fn predict_text(&self, z_prev: &DistributionGrid, phrase: &str) -> Result<DistributionGrid> {
        let c = self.project(&self.embed(phrase))?;
        self.predict(z_prev, &c)
    }

    fn forward_cell(&self, ws: &mut Workspace, row: &[f64], c: f64, nb: &[f64]) {
        let p = &self.predictor;
        let (k, w) = (self.config.k, self.config.width);
        ws.x_idx.clear();
        ws.x_val.clear();
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                ws.x_idx.push(j);
                ws.x_val.push(v);
            }
        }
        ws.x_idx.push(k);
        ws.x_val.push(c);
        for (j, &v) in nb.iter().enumerate() {
            if v != 0.0 {
                ws.x_idx.push(k + 1 + j);
                ws.x_val.push(v);
            }
        }
        let a0 = &mut ws.a[0];
        a0.copy_from_slice(&p.b_in);
        for (&j, &v) in ws.x_idx.iter().zip(&ws.x_val) {
            axpy(a0, v, &p.w_in[j * w..(j + 1) * w]);
        }
        for (h, &a) in ws.h[0].iter_mut().zip(a0.iter()) {
            *h = silu(a);
        }
        for l in 0..p.w_res.len() {
            let (lower, upper) = ws.h.split_at_mut(l + 1);
            let h_in = &lower[l];
            let h_out = &mut upper[0];
            let a = &mut ws.a[l + 1];
            for o in 0..w {
                let row = &p.w_res[l][o * w..(o + 1) * w];
                a[o] = p.b_res[l][o] + dot(row, h_in);
                h_out[o] = h_in[o] + silu(a[o]);
            }
        }
        let h_last = &ws.h[p.w_res.len()];
        for (kk, s) in ws.skip.iter_mut().enumerate() {
            *s = row[kk].max(SKIP_FLOOR).ln();
        }
        let mut max = f64::NEG_INFINITY;
        for kk in 0..k {
            let row_w = &p.w_out[kk * w..(kk + 1) * w];
            let o = p.b_out[kk] + dot(row_w, h_last) + p.skip * ws.skip[kk];
            ws.o[kk] = o;
            max = max.max(o);
        }
        let mut sum = 0.0;
        for kk in 0..k {
            ws.p[kk] = (ws.o[kk] - max).exp();
            sum += ws.p[kk];
        }
        let lse = max + sum.ln();
        for kk in 0..k {
            ws.p[kk] /= sum;
            ws.logp[kk] = ws.o[kk] - lse;
        }
    }

    /// Mean soft-label cross-entropy of the prediction, with its gradient
    /// accumulated into `grad` (scaled by `weight`). Also returns the prediction.
    pub fn loss_and_grad(
        &self,
        z_prev: &DistributionGrid,
        b: &[f64],
        target: &DistributionGrid,
        grad: &mut Gradient,
        weight: f64,
    ) -> Result<(f64, DistributionGrid)> {
        self.check_grid(z_prev)?;
        self.check_grid(target)?;
        let c = self.project(b)?;
        let (k, w, n) = (self.config.k, self.config.width, self.config.cells());
        let depth = self.predictor.w_res.len();
        let nb = neighbor_means(z_prev);
        let mut ws = Workspace::new(&self.config);
        let p = &self.predictor;
        let mut loss = 0.0;
        let mut pred = Vec::with_capacity(n * k);
        let inv_n = 1.0 / n as f64;
        for cell in 0..n {
            let row = z_prev.row(cell);
            let t = target.row(cell);
            self.forward_cell(&mut ws, row, c[cell], &nb[cell * k..(cell + 1) * k]);
            pred.extend_from_slice(&ws.p);
            let t_sum: f64 = t.iter().sum();
            loss -= t.iter().zip(&ws.logp).map(|(a, b)| a * b).sum::<f64>() * inv_n;

            for kk in 0..k {
                ws.d_o[kk] = (ws.p[kk] * t_sum - t[kk]) * inv_n * weight;
            }
            let h_last = &ws.h[depth];
            ws.d_h.iter_mut().for_each(|v| *v = 0.0);
            for kk in 0..k {
                let d = ws.d_o[kk];
                grad.b_out[kk] += d;
                grad.skip += d * ws.skip[kk];
                axpy(&mut grad.w_out[kk * w..(kk + 1) * w], d, h_last);
                axpy(&mut ws.d_h, d, &p.w_out[kk * w..(kk + 1) * w]);
            }
            for l in (0..depth).rev() {
                let a = &ws.a[l + 1];
                let h_in = &ws.h[l];
                for o in 0..w {
                    ws.d_a[o] = ws.d_h[o] * silu_grad(a[o]);
                }
                let gw = &mut grad.w_res[l];
                for o in 0..w {
                    let d = ws.d_a[o];
                    grad.b_res[l][o] += d;
                    if d != 0.0 {
                        axpy(&mut gw[o * w..(o + 1) * w], d, h_in);
                        axpy(&mut ws.d_h, d, &p.w_res[l][o * w..(o + 1) * w]);
                    }
                }
            }
            for o in 0..w {
                ws.d_a[o] = ws.d_h[o] * silu_grad(ws.a[0][o]);
                grad.b_in[o] += ws.d_a[o];
            }
            for (&j, &v) in ws.x_idx.iter().zip(&ws.x_val) {
                axpy(&mut grad.w_in[j * w..(j + 1) * w], v, &ws.d_a);
            }
            let d_c = dot(&p.w_in[k * w..(k + 1) * w], &ws.d_a);
            grad.proj_b[cell] += d_c;
            let d = b.len();
            axpy(&mut grad.proj_w[cell * d..(cell + 1) * d], d_c, b);
        }
        Ok((loss, DistributionGrid::from_weights(self.config.g, k, pred)?))
    }

    pub fn to_json(&self) -> Result<String> {
        let names = group_names(self.config.depth);
        let blocks: BTreeMap<String, String> = names
            .into_iter()
            .zip(self.groups())
            .map(|(n, g)| (n, encode_f64s(g.iter().copied())))
            .collect();
        let file = ModelFile {
            d_b: self.config.embed_dim,
            g: self.config.g,
            k: self.config.k,
            width: self.config.width,
            depth: self.config.depth,
            hash_seed: self.config.hash_seed,
            order: group_names(self.config.depth),
            params: blocks,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let config = ModelConfig {
            g: file.g,
            k: file.k,
            embed_dim: file.d_b,
            width: file.width,
            depth: file.depth,
            hash_seed: file.hash_seed,
        };
        let mut model = Self::zeros(config)?;
        let names = group_names(config.depth);
        for (name, group) in names.iter().zip(model.groups_mut()) {
            let block = file
                .params
                .get(name)
                .ok_or_else(|| Error::Format(format!("model file lacks block {name}")))?;
            let values = decode_f64s(block)?;
            if values.len() != group.len() {
                return Err(Error::Format(format!(
                    "block {name} has {} values, expected {}",
                    values.len(),
                    group.len()
                )));
            }
            group.copy_from_slice(&values);
        }
        if !model.all_finite() {
            return Err(Error::Numeric("model file holds non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    d_b: usize,
    g: usize,
    k: usize,
    width: usize,
    depth: usize,
    hash_seed: u64,
    order: Vec<String>,
    params: BTreeMap<String, String>,
}

/// Gradient buffers shaped like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub w_res: Vec<Vec<f64>>,
    pub b_res: Vec<Vec<f64>>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
    pub skip: f64,
}

impl Gradient {
    pub fn zeros_like(model: &ConditionalModel) -> Self {
        let z = ConditionalModel::zeros(model.config).expect("model config already validated");
        Self {
            proj_w: z.projector.weight,
            proj_b: z.projector.bias,
            w_in: z.predictor.w_in,
            b_in: z.predictor.b_in,
            w_res: z.predictor.w_res,
            b_res: z.predictor.b_res,
            w_out: z.predictor.w_out,
            b_out: z.predictor.b_out,
            skip: 0.0,
        }
    }

    pub fn groups(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.proj_w, &self.proj_b, &self.w_in, &self.b_in];
        for l in 0..self.w_res.len() {
            out.push(&self.w_res[l]);
            out.push(&self.b_res[l]);
        }
        out.push(&self.w_out);
        out.push(&self.b_out);
        out.push(std::slice::from_ref(&self.skip));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.proj_w, &mut self.proj_b, &mut self.w_in, &mut self.b_in];
        for (w, b) in self.w_res.iter_mut().zip(self.b_res.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out.push(std::slice::from_mut(&mut self.skip));
        out
    }

    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.groups_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn clear(&mut self) {
        self.scale(0.0);
    }
}

struct Workspace {
    x_idx: Vec<usize>,
    x_val: Vec<f64>,
    a: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    skip: Vec<f64>,
    o: Vec<f64>,
    p: Vec<f64>,
    logp: Vec<f64>,
    d_o: Vec<f64>,
    d_h: Vec<f64>,
    d_a: Vec<f64>,
}

impl Workspace {
    fn new(c: &ModelConfig) -> Self {
        Self {
            x_idx: Vec::with_capacity(c.input_dim()),
            x_val: Vec::with_capacity(c.input_dim()),
            a: vec![vec![0.0; c.width]; c.depth + 1],
            h: vec![vec![0.0; c.width]; c.depth + 1],
            skip: vec![0.0; c.k],
            o: vec![0.0; c.k],
            p: vec![0.0; c.k],
            logp: vec![0.0; c.k],
            d_o: vec![0.0; c.k],
            d_h: vec![0.0; c.width],
            d_a: vec![0.0; c.width],
        }
    }
}

/// Mean of the existing 6-neighbour rows of every cell, cells × K.
pub fn neighbor_means(z: &DistributionGrid) -> Vec<f64> {
    let (g, k) = (z.g(), z.k());
    let mut out = vec![0.0; z.cells() * k];
    for cz in 0..g {
        for cy in 0..g {
            for cx in 0..g {
                let cell = cx + g * (cy + g * cz);
                let mut count = 0.0;
                let acc = &mut out[cell * k..(cell + 1) * k];
                let mut add = |nx: usize, ny: usize, nz: usize| {
                    let row = z.row(nx + g * (ny + g * nz));
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                    count += 1.0;
                };
                if cx > 0 {
                    add(cx - 1, cy, cz);
                }
                if cx + 1 < g {
                    add(cx + 1, cy, cz);
                }
                if cy > 0 {
                    add(cx, cy - 1, cz);
                }
                if cy + 1 < g {
                    add(cx, cy + 1, cz);
                }
                if cz > 0 {
                    add(cx, cy, cz - 1);
                }
                if cz + 1 < g {
                    add(cx, cy, cz + 1);
                }
                if count > 0.0 {
                    acc.iter_mut().for_each(|a| *a /= count);
                }
            }
        }
    }
    out
}
