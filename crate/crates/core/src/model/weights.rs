//! Parameter containers shared by storage (`Mat`), tape bindings (`Var`),
//! gradients and optimizer state.
//!
//! Linear weights use the `[out, in]` layout, so a layer computes
//! `x · Wᵀ + b` on row-major token matrices.

use serde::{Deserialize, Serialize};

use crate::autograd::Mat;
use crate::rng::{self, Rng};

use super::config::{FusionVariant, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Base,
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: T,
    pub b: T,
}

/// One transformer block: multi-head self-attention then a GELU MLP, each
/// behind a pre-layer-norm residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub o: Linear<T>,
    pub up: Linear<T>,
    pub down: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fusion<T> {
    Unified(Linear<T>),
    Separate { dense: Linear<T>, sparse: Linear<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub latent_embed: Linear<T>,
    pub anchor_embed: Linear<T>,
    pub head: Linear<T>,
    pub base_blocks: Vec<Block<T>>,
    pub dense_embed: Linear<T>,
    pub sparse_embed: Linear<T>,
    pub dense_branch: Vec<Block<T>>,
    pub sparse_branch: Vec<Block<T>>,
    pub fusion: Vec<Fusion<T>>,
}

impl<T> Linear<T> {
    fn map<U>(&self, name: &str, group: ParamGroup, f: &mut impl FnMut(&str, ParamGroup, &T) -> U) -> Linear<U> {
        Linear {
            w: f(&format!("{name}.w"), group, &self.w),
            b: f(&format!("{name}.b"), group, &self.b),
        }
    }

    fn refs<'a>(&'a self, name: &str, group: ParamGroup, out: &mut Vec<(String, ParamGroup, &'a T)>) {
        out.push((format!("{name}.w"), group, &self.w));
        out.push((format!("{name}.b"), group, &self.b));
    }

    fn refs_mut<'a>(&'a mut self, group: ParamGroup, out: &mut Vec<(ParamGroup, &'a mut T)>) {
        out.push((group, &mut self.w));
        out.push((group, &mut self.b));
    }
}

impl<T> Block<T> {
    fn linears(&self) -> [(&'static str, &Linear<T>); 6] {
        [
            ("attn.q", &self.q),
            ("attn.k", &self.k),
            ("attn.v", &self.v),
            ("attn.o", &self.o),
            ("mlp.up", &self.up),
            ("mlp.down", &self.down),
        ]
    }

    fn map<U>(&self, name: &str, group: ParamGroup, f: &mut impl FnMut(&str, ParamGroup, &T) -> U) -> Block<U> {
        Block {
            q: self.q.map(&format!("{name}.attn.q"), group, f),
            k: self.k.map(&format!("{name}.attn.k"), group, f),
            v: self.v.map(&format!("{name}.attn.v"), group, f),
            o: self.o.map(&format!("{name}.attn.o"), group, f),
            up: self.up.map(&format!("{name}.mlp.up"), group, f),
            down: self.down.map(&format!("{name}.mlp.down"), group, f),
        }
    }

    fn refs<'a>(&'a self, name: &str, group: ParamGroup, out: &mut Vec<(String, ParamGroup, &'a T)>) {
        for (suffix, lin) in self.linears() {
            lin.refs(&format!("{name}.{suffix}"), group, out);
        }
    }

    fn refs_mut<'a>(&'a mut self, group: ParamGroup, out: &mut Vec<(ParamGroup, &'a mut T)>) {
        for lin in [
            &mut self.q,
            &mut self.k,
            &mut self.v,
            &mut self.o,
            &mut self.up,
            &mut self.down,
        ] {
            lin.refs_mut(group, out);
        }
    }
}

impl<T> Fusion<T> {
    fn map<U>(&self, name: &str, f: &mut impl FnMut(&str, ParamGroup, &T) -> U) -> Fusion<U> {
        let g = ParamGroup::Control;
        match self {
            Fusion::Unified(l) => Fusion::Unified(l.map(name, g, f)),
            Fusion::Separate { dense, sparse } => Fusion::Separate {
                dense: dense.map(&format!("{name}.dense"), g, f),
                sparse: sparse.map(&format!("{name}.sparse"), g, f),
            },
        }
    }

    fn refs<'a>(&'a self, name: &str, out: &mut Vec<(String, ParamGroup, &'a T)>) {
        let g = ParamGroup::Control;
        match self {
            Fusion::Unified(l) => l.refs(name, g, out),
            Fusion::Separate { dense, sparse } => {
                dense.refs(&format!("{name}.dense"), g, out);
                sparse.refs(&format!("{name}.sparse"), g, out);
            }
        }
    }

    fn refs_mut<'a>(&'a mut self, out: &mut Vec<(ParamGroup, &'a mut T)>) {
        let g = ParamGroup::Control;
        match self {
            Fusion::Unified(l) => l.refs_mut(g, out),
            Fusion::Separate { dense, sparse } => {
                dense.refs_mut(g, out);
                sparse.refs_mut(g, out);
            }
        }
    }
}

impl<T> Weights<T> {
    /// Applies `f` to every parameter in canonical order, keeping structure.
    pub fn map<U>(&self, mut f: impl FnMut(&str, ParamGroup, &T) -> U) -> Weights<U> {
        use ParamGroup::{Base, Control};
        let f = &mut f;
        Weights {
            latent_embed: self.latent_embed.map("embed.latent", Base, f),
            anchor_embed: self.anchor_embed.map("embed.anchor", Base, f),
            head: self.head.map("head", Base, f),
            base_blocks: self
                .base_blocks
                .iter()
                .enumerate()
                .map(|(i, b)| b.map(&format!("base.{i}"), Base, f))
                .collect(),
            dense_embed: self.dense_embed.map("embed.dense", Control, f),
            sparse_embed: self.sparse_embed.map("embed.sparse", Control, f),
            dense_branch: self
                .dense_branch
                .iter()
                .enumerate()
                .map(|(i, b)| b.map(&format!("dense.{i}"), Control, f))
                .collect(),
            sparse_branch: self
                .sparse_branch
                .iter()
                .enumerate()
                .map(|(i, b)| b.map(&format!("sparse.{i}"), Control, f))
                .collect(),
            fusion: self
                .fusion
                .iter()
                .enumerate()
                .map(|(i, fu)| fu.map(&format!("fusion.{i}"), f))
                .collect(),
        }
    }

    /// Every parameter with its canonical name and group, in canonical order.
    pub fn named(&self) -> Vec<(String, ParamGroup, &T)> {
        use ParamGroup::{Base, Control};
        let mut out = Vec::new();
        self.latent_embed.refs("embed.latent", Base, &mut out);
        self.anchor_embed.refs("embed.anchor", Base, &mut out);
        self.head.refs("head", Base, &mut out);
        for (i, b) in self.base_blocks.iter().enumerate() {
            b.refs(&format!("base.{i}"), Base, &mut out);
        }
        self.dense_embed.refs("embed.dense", Control, &mut out);
        self.sparse_embed.refs("embed.sparse", Control, &mut out);
        for (i, b) in self.dense_branch.iter().enumerate() {
            b.refs(&format!("dense.{i}"), Control, &mut out);
        }
        for (i, b) in self.sparse_branch.iter().enumerate() {
            b.refs(&format!("sparse.{i}"), Control, &mut out);
        }
        for (i, fu) in self.fusion.iter().enumerate() {
            fu.refs(&format!("fusion.{i}"), &mut out);
        }
        out
    }

    /// Mutable parameters in the same order as [`Weights::named`].
    pub fn params_mut(&mut self) -> Vec<(ParamGroup, &mut T)> {
        use ParamGroup::{Base, Control};
        let mut out = Vec::new();
        self.latent_embed.refs_mut(Base, &mut out);
        self.anchor_embed.refs_mut(Base, &mut out);
        self.head.refs_mut(Base, &mut out);
        for b in &mut self.base_blocks {
            b.refs_mut(Base, &mut out);
        }
        self.dense_embed.refs_mut(Control, &mut out);
        self.sparse_embed.refs_mut(Control, &mut out);
        for b in &mut self.dense_branch {
            b.refs_mut(Control, &mut out);
        }
        for b in &mut self.sparse_branch {
            b.refs_mut(Control, &mut out);
        }
        for fu in &mut self.fusion {
            fu.refs_mut(&mut out);
        }
        out
    }
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Mat {
    let mut data = rng::normal_vec(rng, rows * cols);
    // Stored values are kept representable in f32 so checkpoints are exact.
    data.iter_mut().for_each(|x| *x = round_f32(*x * std));
    Mat::from_vec(rows, cols, data)
}

#[inline]
pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

fn random_linear(out: usize, inp: usize, rng: &mut Rng) -> Linear<Mat> {
    Linear {
        w: gaussian(out, inp, 1.0 / (inp as f64).sqrt(), rng),
        b: gaussian(1, out, 0.02, rng),
    }
}

fn zero_linear(out: usize, inp: usize) -> Linear<Mat> {
    Linear {
        w: Mat::zeros(out, inp),
        b: Mat::zeros(1, out),
    }
}

pub fn random_block(width: usize, mlp: usize, rng: &mut Rng) -> Block<Mat> {
    Block {
        q: random_linear(width, width, rng),
        k: random_linear(width, width, rng),
        v: random_linear(width, width, rng),
        o: random_linear(width, width, rng),
        up: random_linear(mlp, width, rng),
        down: random_linear(width, mlp, rng),
    }
}

fn columns(m: &Mat, parity: usize) -> Mat {
    Mat::from_fn(m.rows, m.cols / 2, |r, c| m.at(r, 2 * c + parity))
}

fn rows(m: &Mat, parity: usize) -> Mat {
    Mat::from_fn(m.rows / 2, m.cols, |r, c| m.at(2 * r + parity, c))
}

fn interleave_columns(even: &Mat, odd: &Mat) -> Mat {
    Mat::from_fn(even.rows, even.cols * 2, |r, c| {
        if c % 2 == 0 {
            even.at(r, c / 2)
        } else {
            odd.at(r, c / 2)
        }
    })
}

fn interleave_rows(even: &Mat, odd: &Mat) -> Mat {
    Mat::from_fn(even.rows * 2, even.cols, |r, c| {
        if r % 2 == 0 {
            even.at(r / 2, c)
        } else {
            odd.at(r / 2, c)
        }
    })
}

/// Reads from the stream: split the input columns, keep the bias.
fn split_reader(l: &Linear<Mat>, parity: usize) -> Linear<Mat> {
    Linear {
        w: columns(&l.w, parity),
        b: l.b.clone(),
    }
}

/// Writes to the stream: split the output rows and the bias.
fn split_writer(l: &Linear<Mat>, parity: usize) -> Linear<Mat> {
    Linear {
        w: rows(&l.w, parity),
        b: columns(&l.b, parity),
    }
}

fn split_block(b: &Block<Mat>, parity: usize) -> Block<Mat> {
    Block {
        q: split_reader(&b.q, parity),
        k: split_reader(&b.k, parity),
        v: split_reader(&b.v, parity),
        o: split_writer(&b.o, parity),
        up: split_reader(&b.up, parity),
        down: split_writer(&b.down, parity),
    }
}

/// Half-width copies of the first `n_control_blocks` base blocks.
///
/// Stream feature indices are dealt by parity: even indices go to the dense
/// branch, odd to the sparse branch. Matrices that read the stream (q, k, v,
/// MLP up) lose the other parity's input columns; matrices that write it
/// (attention out, MLP down) lose the other parity's output rows and bias
/// entries. Internal attention and MLP widths are unchanged, so every base
/// weight entry lands in exactly one branch.
pub fn init_control_branches(base_blocks: &[Block<Mat>], config: &ModelConfig) -> (Vec<Block<Mat>>, Vec<Block<Mat>>) {
    let copied = &base_blocks[..config.n_control_blocks];
    (
        copied.iter().map(|b| split_block(b, 0)).collect(),
        copied.iter().map(|b| split_block(b, 1)).collect(),
    )
}

/// Inverse of the half copy: rebuilds a full block from a dense/sparse pair.
/// Reader biases are copied whole into both halves and taken from `dense`.
pub fn merge_branches(dense: &Block<Mat>, sparse: &Block<Mat>) -> Block<Mat> {
    let reader = |d: &Linear<Mat>, s: &Linear<Mat>| Linear {
        w: interleave_columns(&d.w, &s.w),
        b: d.b.clone(),
    };
    let writer = |d: &Linear<Mat>, s: &Linear<Mat>| Linear {
        w: interleave_rows(&d.w, &s.w),
        b: interleave_columns(&d.b, &s.b),
    };
    Block {
        q: reader(&dense.q, &sparse.q),
        k: reader(&dense.k, &sparse.k),
        v: reader(&dense.v, &sparse.v),
        o: writer(&dense.o, &sparse.o),
        up: reader(&dense.up, &sparse.up),
        down: writer(&dense.down, &sparse.down),
    }
}

/// Random base, half-copied branches, zero fusion.
pub fn init_weights(config: &ModelConfig, rng: &mut Rng) -> Weights<Mat> {
    let d = config.token_dim;
    let half = config.half_dim();
    let latent_embed = random_linear(d, config.patch_dim(), rng);
    let anchor_embed = random_linear(d, config.patch_dim(), rng);
    let head = random_linear(config.patch_dim(), d, rng);
    let base_blocks: Vec<_> = (0..config.n_base_blocks)
        .map(|_| random_block(d, config.mlp_dim(), rng))
        .collect();
    let dense_embed = random_linear(half, config.control_patch_dim(), rng);
    let sparse_embed = random_linear(half, config.control_patch_dim(), rng);
    let (dense_branch, sparse_branch) = init_control_branches(&base_blocks, config);
    let fusion = (0..config.n_control_blocks)
        .map(|_| match config.fusion {
            FusionVariant::Unified => Fusion::Unified(zero_linear(d, half)),
            FusionVariant::Separate => Fusion::Separate {
                dense: zero_linear(d, half),
                sparse: zero_linear(d, half),
            },
        })
        .collect();
    Weights {
        latent_embed,
        anchor_embed,
        head,
        base_blocks,
        dense_embed,
        sparse_embed,
        dense_branch,
        sparse_branch,
        fusion,
    }
}
