//! Flat-parameter networks with hand-written backward passes.
//!
//! Parameters live in one `Vec<f64>`; a [`Layout`] names the groups and
//! fixes their order, which is also the serialization order. Matrices are
//! row-major `out x in`.

use super::{Ablation, FistaConfig, MlpConfig};
use crate::datagen::FRAME_DIM;

pub const POSE_DIM: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layout {
    groups: Vec<ParamGroup>,
    len: usize,
}

impl Layout {
    fn add(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let offset = self.len;
        self.groups.push(ParamGroup {
            name,
            offset,
            rows,
            cols,
        });
        self.len += rows * cols;
        offset
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Affine map `y = W x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Linear {
    w: usize,
    b: usize,
    pub out: usize,
    pub inp: usize,
}

impl Linear {
    fn new(layout: &mut Layout, name: &str, out: usize, inp: usize) -> Self {
        let w = layout.add(format!("{name}.weight"), out, inp);
        let b = layout.add(format!("{name}.bias"), out, 1);
        Self { w, b, out, inp }
    }

    fn weight<'p>(&self, p: &'p [f64]) -> &'p [f64] {
        &p[self.w..self.w + self.out * self.inp]
    }

    fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inp);
        let w = self.weight(p);
        for (i, yi) in y.iter_mut().enumerate().take(self.out) {
            *yi = p[self.b + i] + dot(&w[i * self.inp..(i + 1) * self.inp], x);
        }
    }

    fn apply(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.out];
        self.forward(p, x, &mut y);
        y
    }

    /// Accumulates parameter gradients and, if requested, `W^T dy` into `dx`.
    fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        for (i, &d) in dy.iter().enumerate() {
            g[self.b + i] += d;
            if d != 0.0 {
                let row = &mut g[self.w + i * self.inp..self.w + (i + 1) * self.inp];
                for (gj, xj) in row.iter_mut().zip(x) {
                    *gj += d * xj;
                }
            }
        }
        if let Some(dx) = dx {
            let w = self.weight(p);
            for (i, &d) in dy.iter().enumerate() {
                if d != 0.0 {
                    for (dxj, wj) in dx.iter_mut().zip(&w[i * self.inp..(i + 1) * self.inp]) {
                        *dxj += d * wj;
                    }
                }
            }
        }
    }

    /// Glorot-uniform weight ranges, zero biases.
    fn init(&self, p: &mut [f64], rng: &mut impl rand::Rng) {
        let a = (6.0 / (self.inp + self.out) as f64).sqrt();
        for v in &mut p[self.w..self.w + self.out * self.inp] {
            *v = rng.gen_range(-a..=a);
        }
        for v in &mut p[self.b..self.b + self.out] {
            *v = 0.0;
        }
    }
}

fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `dy * (1 - y^2)` for `y = tanh(a)`.
fn tanh_back(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect()
}

/// Stack of tanh layers followed by a linear output layer.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    fn new(layout: &mut Layout, name: &str, inp: usize, hidden: &[usize], out: usize) -> Self {
        let mut layers = Vec::new();
        let mut prev = inp;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Linear::new(layout, &format!("{name}.{i}"), h, prev));
            prev = h;
        }
        layers.push(Linear::new(layout, &format!("{name}.{}", hidden.len()), out, prev));
        Self { layers }
    }

    /// Returns every layer's output; the last one is the network output.
    fn forward(&self, p: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            let mut y = l.apply(p, input);
            if i + 1 < self.layers.len() {
                tanh_in_place(&mut y);
            }
            acts.push(y);
        }
        acts
    }

    fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], acts: &[Vec<f64>], dy: &[f64], dx: Option<&mut [f64]>) {
        let last = self.layers.len() - 1;
        let mut d = dy.to_vec();
        for i in (1..=last).rev() {
            if i < last {
                d = tanh_back(&acts[i], &d);
            }
            let mut dprev = vec![0.0; self.layers[i].inp];
            self.layers[i].backward(p, g, &acts[i - 1], &d, Some(&mut dprev));
            d = dprev;
        }
        if last > 0 {
            d = tanh_back(&acts[0], &d);
        }
        self.layers[0].backward(p, g, x, &d, dx);
    }

    fn init(&self, p: &mut [f64], rng: &mut impl rand::Rng) {
        for l in &self.layers {
            l.init(p, rng);
        }
    }
}

/// PyTorch-style GRU cell.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Gru {
    ir: Linear,
    iz: Linear,
    in_: Linear,
    hr: Linear,
    hz: Linear,
    hn: Linear,
    hidden: usize,
}

#[derive(Debug, Clone)]
struct GruStep {
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h_prev + b_hn`.
    hn: Vec<f64>,
}

impl Gru {
    fn new(layout: &mut Layout, inp: usize, hidden: usize) -> Self {
        Self {
            ir: Linear::new(layout, "gru.input_reset", hidden, inp),
            iz: Linear::new(layout, "gru.input_update", hidden, inp),
            in_: Linear::new(layout, "gru.input_candidate", hidden, inp),
            hr: Linear::new(layout, "gru.hidden_reset", hidden, hidden),
            hz: Linear::new(layout, "gru.hidden_update", hidden, hidden),
            hn: Linear::new(layout, "gru.hidden_candidate", hidden, hidden),
            hidden,
        }
    }

    fn step(&self, p: &[f64], x: &[f64], h: &[f64]) -> (Vec<f64>, GruStep) {
        let hd = self.hidden;
        let (mut r, mut z, mut n) = (self.ir.apply(p, x), self.iz.apply(p, x), self.in_.apply(p, x));
        let hr = self.hr.apply(p, h);
        let hz = self.hz.apply(p, h);
        let hn = self.hn.apply(p, h);
        let mut h_new = vec![0.0; hd];
        for i in 0..hd {
            r[i] = sigmoid(r[i] + hr[i]);
            z[i] = sigmoid(z[i] + hz[i]);
            n[i] = (n[i] + r[i] * hn[i]).tanh();
            h_new[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
        }
        (
            h_new,
            GruStep {
                h_prev: h.to_vec(),
                r,
                z,
                n,
                hn,
            },
        )
    }

    /// Gradient through one step; returns `d h_prev` and adds `d x` into `dx`.
    fn step_back(&self, p: &[f64], g: &mut [f64], x: &[f64], s: &GruStep, dh: &[f64], dx: &mut [f64]) -> Vec<f64> {
        let hd = self.hidden;
        let mut dh_prev = vec![0.0; hd];
        let mut da_n = vec![0.0; hd];
        let mut da_z = vec![0.0; hd];
        let mut da_r = vec![0.0; hd];
        let mut d_hn = vec![0.0; hd];
        for i in 0..hd {
            let dn = dh[i] * (1.0 - s.z[i]);
            let dz = dh[i] * (s.h_prev[i] - s.n[i]);
            dh_prev[i] = dh[i] * s.z[i];
            da_n[i] = dn * (1.0 - s.n[i] * s.n[i]);
            let dr = da_n[i] * s.hn[i];
            d_hn[i] = da_n[i] * s.r[i];
            da_z[i] = dz * s.z[i] * (1.0 - s.z[i]);
            da_r[i] = dr * s.r[i] * (1.0 - s.r[i]);
        }
        self.in_.backward(p, g, x, &da_n, Some(dx));
        self.iz.backward(p, g, x, &da_z, Some(dx));
        self.ir.backward(p, g, x, &da_r, Some(dx));
        self.hn.backward(p, g, &s.h_prev, &d_hn, Some(&mut dh_prev));
        self.hz.backward(p, g, &s.h_prev, &da_z, Some(&mut dh_prev));
        self.hr.backward(p, g, &s.h_prev, &da_r, Some(&mut dh_prev));
        dh_prev
    }

    fn init(&self, p: &mut [f64], rng: &mut impl rand::Rng) {
        for l in [&self.ir, &self.iz, &self.in_, &self.hr, &self.hz, &self.hn] {
            l.init(p, rng);
        }
    }
}

/// Single-head self-attention over the EE and elbow tokens of the last
/// frame, mean-pooled and projected.
#[derive(Debug, Clone, PartialEq, Eq)]
struct TwoTokenAttention {
    tokens: [Linear; 2],
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    dim: usize,
}

#[derive(Debug, Clone)]
struct AttentionCache {
    tau: [Vec<f64>; 2],
    q: [Vec<f64>; 2],
    k: [Vec<f64>; 2],
    v: [Vec<f64>; 2],
    /// Row-softmaxed scores.
    p: [[f64; 2]; 2],
    pooled: Vec<f64>,
}

impl TwoTokenAttention {
    fn new(layout: &mut Layout, dim: usize) -> Self {
        Self {
            tokens: [
                Linear::new(layout, "attn.token_ee", dim, POSE_DIM),
                Linear::new(layout, "attn.token_elbow", dim, POSE_DIM),
            ],
            q: Linear::new(layout, "attn.query", dim, dim),
            k: Linear::new(layout, "attn.key", dim, dim),
            v: Linear::new(layout, "attn.value", dim, dim),
            o: Linear::new(layout, "attn.output", dim, dim),
            dim,
        }
    }

    fn forward(&self, p: &[f64], frame: &[f64]) -> (Vec<f64>, AttentionCache) {
        let tau = [0, 1].map(|i| {
            let mut t = self.tokens[i].apply(p, &frame[i * POSE_DIM..(i + 1) * POSE_DIM]);
            tanh_in_place(&mut t);
            t
        });
        let q = [0, 1].map(|i| self.q.apply(p, &tau[i]));
        let k = [0, 1].map(|i| self.k.apply(p, &tau[i]));
        let v = [0, 1].map(|i| self.v.apply(p, &tau[i]));
        let scale = 1.0 / (self.dim as f64).sqrt();
        let mut probs = [[0.0; 2]; 2];
        for i in 0..2 {
            let s = [dot(&q[i], &k[0]) * scale, dot(&q[i], &k[1]) * scale];
            let m = s[0].max(s[1]);
            let e = [(s[0] - m).exp(), (s[1] - m).exp()];
            let z = e[0] + e[1];
            probs[i] = [e[0] / z, e[1] / z];
        }
        let mut pooled = vec![0.0; self.dim];
        for (d, out) in pooled.iter_mut().enumerate() {
            let mut acc = 0.0;
            for row in &probs {
                acc += row[0] * v[0][d] + row[1] * v[1][d];
            }
            *out = 0.5 * acc;
        }
        let a = self.o.apply(p, &pooled);
        (
            a,
            AttentionCache {
                tau,
                q,
                k,
                v,
                p: probs,
                pooled,
            },
        )
    }

    fn backward(&self, p: &[f64], g: &mut [f64], frame: &[f64], c: &AttentionCache, da: &[f64]) {
        let n = self.dim;
        let mut dpooled = vec![0.0; n];
        self.o.backward(p, g, &c.pooled, da, Some(&mut dpooled));
        // pooled = (o_0 + o_1) / 2, o_i = sum_j p_ij v_j
        let d_o: Vec<f64> = dpooled.iter().map(|d| 0.5 * d).collect();
        let scale = 1.0 / (n as f64).sqrt();
        let mut dq = [vec![0.0; n], vec![0.0; n]];
        let mut dk = [vec![0.0; n], vec![0.0; n]];
        let mut dv = [vec![0.0; n], vec![0.0; n]];
        for i in 0..2 {
            let dp = [dot(&d_o, &c.v[0]), dot(&d_o, &c.v[1])];
            for j in 0..2 {
                for (a, b) in dv[j].iter_mut().zip(&d_o) {
                    *a += c.p[i][j] * b;
                }
            }
            let mean = c.p[i][0] * dp[0] + c.p[i][1] * dp[1];
            for j in 0..2 {
                let ds = c.p[i][j] * (dp[j] - mean) * scale;
                for d in 0..n {
                    dq[i][d] += ds * c.k[j][d];
                    dk[j][d] += ds * c.q[i][d];
                }
            }
        }
        for i in 0..2 {
            let mut dtau = vec![0.0; n];
            self.q.backward(p, g, &c.tau[i], &dq[i], Some(&mut dtau));
            self.k.backward(p, g, &c.tau[i], &dk[i], Some(&mut dtau));
            self.v.backward(p, g, &c.tau[i], &dv[i], Some(&mut dtau));
            let dpre = tanh_back(&c.tau[i], &dtau);
            self.tokens[i].backward(p, g, &frame[i * POSE_DIM..(i + 1) * POSE_DIM], &dpre, None);
        }
    }

    fn init(&self, p: &mut [f64], rng: &mut impl rand::Rng) {
        for l in self.tokens.iter().chain([&self.q, &self.k, &self.v, &self.o]) {
            l.init(p, rng);
        }
    }
}

/// Builds the feature-wise scale and shift from the target embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Film {
    gamma: Linear,
    beta: Linear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FistaNet {
    cfg: FistaConfig,
    embed: Linear,
    gru: Option<Gru>,
    target: Linear,
    film: Option<Film>,
    attn: Option<TwoTokenAttention>,
    head: Mlp,
    layout: Layout,
}

#[derive(Debug, Clone)]
pub(crate) struct FistaCache {
    u: Vec<Vec<f64>>,
    steps: Vec<GruStep>,
    summary: Vec<f64>,
    target_emb: Vec<f64>,
    gamma: Vec<f64>,
    fused: Vec<f64>,
    attn: Option<AttentionCache>,
    head_in: Vec<f64>,
    head_acts: Vec<Vec<f64>>,
}

impl FistaNet {
    pub fn new(cfg: &FistaConfig) -> Self {
        let mut layout = Layout::default();
        let embed = Linear::new(&mut layout, "embed", cfg.embed, FRAME_DIM);
        let temporal = cfg.ablate != Ablation::NoTemporal;
        let gru = temporal.then(|| Gru::new(&mut layout, cfg.embed, cfg.gru_hidden));
        let summary = if temporal { cfg.gru_hidden } else { cfg.embed };
        let target = Linear::new(&mut layout, "target_embed", cfg.film_hidden, POSE_DIM);
        let film = (cfg.ablate != Ablation::NoFilm).then(|| Film {
            gamma: Linear::new(&mut layout, "film.gamma", summary, cfg.film_hidden),
            beta: Linear::new(&mut layout, "film.beta", summary, cfg.film_hidden),
        });
        let fused = if film.is_some() {
            summary
        } else {
            summary + cfg.film_hidden
        };
        let attn = (cfg.ablate != Ablation::NoSpatial)
            .then(|| TwoTokenAttention::new(&mut layout, cfg.attn_dim));
        let head = Mlp::new(&mut layout, "head", fused + cfg.attn_dim, &cfg.head_hidden, POSE_DIM);
        Self {
            cfg: cfg.clone(),
            embed,
            gru,
            target,
            film,
            attn,
            head,
            layout,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn init(&self, p: &mut [f64], rng: &mut impl rand::Rng) {
        self.embed.init(p, rng);
        if let Some(g) = &self.gru {
            g.init(p, rng);
        }
        self.target.init(p, rng);
        if let Some(f) = &self.film {
            f.gamma.init(p, rng);
            f.beta.init(p, rng);
        }
        if let Some(a) = &self.attn {
            a.init(p, rng);
        }
        self.head.init(p, rng);
    }

    /// `history` holds `t` normalized frames, `target` the normalized EE target.
    pub fn forward(&self, p: &[f64], history: &[f64], target: &[f64]) -> (Vec<f64>, FistaCache) {
        let t = self.cfg.t;
        let u: Vec<Vec<f64>> = (0..t)
            .map(|i| {
                let mut e = self.embed.apply(p, &history[i * FRAME_DIM..(i + 1) * FRAME_DIM]);
                tanh_in_place(&mut e);
                e
            })
            .collect();
        let mut steps = Vec::new();
        let summary = match &self.gru {
            Some(gru) => {
                let mut h = vec![0.0; gru.hidden];
                for x in &u {
                    let (h_new, s) = gru.step(p, x, &h);
                    steps.push(s);
                    h = h_new;
                }
                h
            }
            None => u[t - 1].clone(),
        };
        let mut target_emb = self.target.apply(p, target);
        tanh_in_place(&mut target_emb);
        let (fused, gamma) = match &self.film {
            Some(f) => {
                let gamma = f.gamma.apply(p, &target_emb);
                let beta = f.beta.apply(p, &target_emb);
                let fused = (0..summary.len())
                    .map(|i| (1.0 + gamma[i]) * summary[i] + beta[i])
                    .collect();
                (fused, gamma)
            }
            None => {
                let mut fused = summary.clone();
                fused.extend_from_slice(&target_emb);
                (fused, Vec::new())
            }
        };
        let last = &history[(t - 1) * FRAME_DIM..t * FRAME_DIM];
        let (spatial, attn) = match &self.attn {
            Some(a) => {
                let (out, c) = a.forward(p, last);
                (out, Some(c))
            }
            None => (vec![0.0; self.cfg.attn_dim], None),
        };
        let mut head_in = fused.clone();
        head_in.extend_from_slice(&spatial);
        let head_acts = self.head.forward(p, &head_in);
        let y = head_acts.last().unwrap().clone();
        (
            y,
            FistaCache {
                u,
                steps,
                summary,
                target_emb,
                gamma,
                fused,
                attn,
                head_in,
                head_acts,
            },
        )
    }

    /// Accumulates `d loss / d params` into `g` given `dy = d loss / d output`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], history: &[f64], target: &[f64], c: &FistaCache, dy: &[f64]) {
        let t = self.cfg.t;
        let mut d_in = vec![0.0; c.head_in.len()];
        self.head.backward(p, g, &c.head_in, &c.head_acts, dy, Some(&mut d_in));
        let fused_len = c.fused.len();
        if let (Some(a), Some(ac)) = (&self.attn, &c.attn) {
            let last = &history[(t - 1) * FRAME_DIM..t * FRAME_DIM];
            a.backward(p, g, last, ac, &d_in[fused_len..]);
        }
        let d_fused = &d_in[..fused_len];
        let s_len = c.summary.len();
        let mut d_summary = vec![0.0; s_len];
        let mut d_target = vec![0.0; c.target_emb.len()];
        match &self.film {
            Some(f) => {
                let mut d_gamma = vec![0.0; s_len];
                for i in 0..s_len {
                    d_summary[i] = d_fused[i] * (1.0 + c.gamma[i]);
                    d_gamma[i] = d_fused[i] * c.summary[i];
                }
                f.gamma.backward(p, g, &c.target_emb, &d_gamma, Some(&mut d_target));
                f.beta.backward(p, g, &c.target_emb, d_fused, Some(&mut d_target));
            }
            None => {
                d_summary.copy_from_slice(&d_fused[..s_len]);
                d_target.copy_from_slice(&d_fused[s_len..]);
            }
        }
        let d_pre = tanh_back(&c.target_emb, &d_target);
        self.target.backward(p, g, target, &d_pre, None);

        let mut du = vec![vec![0.0; self.cfg.embed]; t];
        match &self.gru {
            Some(gru) => {
                let mut dh = d_summary;
                for i in (0..t).rev() {
                    dh = gru.step_back(p, g, &c.u[i], &c.steps[i], &dh, &mut du[i]);
                }
            }
            None => du[t - 1] = d_summary,
        }
        for i in 0..t {
            let d_pre = tanh_back(&c.u[i], &du[i]);
            self.embed
                .backward(p, g, &history[i * FRAME_DIM..(i + 1) * FRAME_DIM], &d_pre, None);
        }
    }
}

/// Flattened history and target through a tanh MLP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct MlpNet {
    t: usize,
    mlp: Mlp,
    layout: Layout,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    input: Vec<f64>,
    acts: Vec<Vec<f64>>,
}

impl MlpNet {
    pub fn new(cfg: &MlpConfig) -> Self {
        let mut layout = Layout::default();
        let mlp = Mlp::new(&mut layout, "mlp", FRAME_DIM * cfg.t + POSE_DIM, &cfg.hidden, POSE_DIM);
        Self {
            t: cfg.t,
            mlp,
            layout,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn init(&self, p: &mut [f64], rng: &mut impl rand::Rng) {
        self.mlp.init(p, rng);
    }

    pub fn forward(&self, p: &[f64], history: &[f64], target: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(history.len(), self.t * FRAME_DIM);
        let mut input = history.to_vec();
        input.extend_from_slice(target);
        let acts = self.mlp.forward(p, &input);
        (acts.last().unwrap().clone(), MlpCache { input, acts })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], c: &MlpCache, dy: &[f64]) {
        self.mlp.backward(p, g, &c.input, &c.acts, dy, None);
    }
}
