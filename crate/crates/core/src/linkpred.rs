//! Link-prediction embeddings and their score functions.
//!
//! | model      | score `φ(r, s, o)`                  | symmetric |
//! |------------|-------------------------------------|-----------|
//! | MatrixFact | `e_s·w_r + e_o·w_r`                 | yes       |
//! | TransE     | `-‖e_s + w_r - e_o‖_p`, `p ∈ {1,2}` | no        |
//! | DistMult   | `Σ_i e_si w_ri e_oi`                | yes       |
//! | Complex    | `Re(Σ_i e_si w_ri conj(e_oi))`      | no        |
//!
//! Embeddings are dense row-major tables indexed by relation and argument id.
//! Complex rows hold the `k` real parts followed by the `k` imaginary parts.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{read_u32, read_u64, ArgumentId, Corpus, RelationId};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"RELIMPE\0";
const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransENorm {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    MatrixFact,
    TransE(TransENorm),
    DistMult,
    Complex,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::MatrixFact,
        ModelKind::TransE(TransENorm::L1),
        ModelKind::TransE(TransENorm::L2),
        ModelKind::DistMult,
        ModelKind::Complex,
    ];

    /// Whether `φ(r, s, o) = φ(r, o, s)` for every state.
    pub fn is_symmetric(self) -> bool {
        matches!(self, ModelKind::MatrixFact | ModelKind::DistMult)
    }

    pub fn is_complex(self) -> bool {
        self == ModelKind::Complex
    }

    /// 200 real dimensions, or 100 complex ones for the same memory.
    pub fn default_dim(self) -> usize {
        if self.is_complex() {
            100
        } else {
            200
        }
    }

    fn code(self) -> (u8, u8) {
        match self {
            ModelKind::MatrixFact => (0, 0),
            ModelKind::TransE(TransENorm::L1) => (1, 1),
            ModelKind::TransE(TransENorm::L2) => (1, 2),
            ModelKind::DistMult => (2, 0),
            ModelKind::Complex => (3, 0),
        }
    }

    fn from_code(kind: u8, norm: u8) -> Result<Self> {
        Ok(match (kind, norm) {
            (0, 0) => ModelKind::MatrixFact,
            (1, 1) => ModelKind::TransE(TransENorm::L1),
            (1, 2) => ModelKind::TransE(TransENorm::L2),
            (2, 0) => ModelKind::DistMult,
            (3, 0) => ModelKind::Complex,
            _ => return Err(Error::Format(format!("unknown model code ({kind}, {norm})"))),
        })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::MatrixFact => "matrixfact",
            ModelKind::TransE(TransENorm::L1) => "transe-l1",
            ModelKind::TransE(TransENorm::L2) => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::Complex => "complex",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "matrixfact" | "mf" | "modelf" => ModelKind::MatrixFact,
            "transe" | "transe-l2" => ModelKind::TransE(TransENorm::L2),
            "transe-l1" => ModelKind::TransE(TransENorm::L1),
            "distmult" => ModelKind::DistMult,
            "complex" => ModelKind::Complex,
            other => return Err(Error::InvalidConfig(format!("unknown model `{other}`"))),
        })
    }
}

/// Gradient of one score with respect to the three rows it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub relation: Vec<f64>,
    pub subject: Vec<f64>,
    pub object: Vec<f64>,
}

/// Trained (or freshly initialized) embedding parameters `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    kind: ModelKind,
    dim: usize,
    seed: u64,
    num_relations: usize,
    num_arguments: usize,
    relations: Vec<f64>,
    arguments: Vec<f64>,
}

impl EmbeddingState {
    /// Entries drawn uniformly from `[-0.5/√k, 0.5/√k]` with a ChaCha8 stream,
    /// relations first, then arguments.
    pub fn init_random(
        kind: ModelKind,
        dim: usize,
        num_relations: usize,
        num_arguments: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut state = Self::zeros(kind, dim, num_relations, num_arguments)?;
        state.seed = seed;
        let bound = init_bound(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in state.relations.iter_mut().chain(state.arguments.iter_mut()) {
            *v = rng.gen_range(-bound..=bound);
        }
        Ok(state)
    }

    pub fn zeros(kind: ModelKind, dim: usize, num_relations: usize, num_arguments: usize) -> Result<Self> {
        if dim == 0 || num_relations == 0 || num_arguments == 0 {
            return Err(Error::InvalidConfig(format!(
                "embedding dimensions must be positive (k={dim}, |R|={num_relations}, |A|={num_arguments})"
            )));
        }
        let width = if kind.is_complex() { 2 * dim } else { dim };
        Ok(EmbeddingState {
            kind,
            dim,
            seed: 0,
            num_relations,
            num_arguments,
            relations: vec![0.0; num_relations * width],
            arguments: vec![0.0; num_arguments * width],
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_arguments(&self) -> usize {
        self.num_arguments
    }

    /// Stored values per row: `k`, or `2k` for Complex.
    pub fn width(&self) -> usize {
        if self.kind.is_complex() {
            2 * self.dim
        } else {
            self.dim
        }
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        let w = self.width();
        &self.relations[r.index() * w..(r.index() + 1) * w]
    }

    pub fn argument(&self, a: ArgumentId) -> &[f64] {
        let w = self.width();
        &self.arguments[a.index() * w..(a.index() + 1) * w]
    }

    pub fn relation_mut(&mut self, r: RelationId) -> &mut [f64] {
        let w = self.width();
        &mut self.relations[r.index() * w..(r.index() + 1) * w]
    }

    pub fn argument_mut(&mut self, a: ArgumentId) -> &mut [f64] {
        let w = self.width();
        &mut self.arguments[a.index() * w..(a.index() + 1) * w]
    }

    pub fn relation_table(&self) -> &[f64] {
        &self.relations
    }

    pub fn argument_table(&self) -> &[f64] {
        &self.arguments
    }

    pub fn is_finite(&self) -> bool {
        self.relations.iter().chain(&self.arguments).all(|v| v.is_finite())
    }

    fn check(&self, r: RelationId, s: ArgumentId, o: ArgumentId) -> Result<()> {
        if r.index() >= self.num_relations {
            return Err(Error::OutOfRange {
                what: "relation",
                id: r.0,
                size: self.num_relations,
            });
        }
        for a in [s, o] {
            if a.index() >= self.num_arguments {
                return Err(Error::OutOfRange {
                    what: "argument",
                    id: a.0,
                    size: self.num_arguments,
                });
            }
        }
        Ok(())
    }

    /// `φ(r, s, o; Θ)`.
    pub fn score(&self, r: RelationId, s: ArgumentId, o: ArgumentId) -> Result<f64> {
        self.check(r, s, o)?;
        Ok(self.score_unchecked(r, s, o))
    }

    pub(crate) fn score_unchecked(&self, r: RelationId, s: ArgumentId, o: ArgumentId) -> f64 {
        phi(self.kind, self.relation(r), self.argument(s), self.argument(o))
    }

    /// Scores a relation of `corpus`, which may be a reversed relation of an
    /// augmented corpus: `φ(r@rev, s, o) = φ(r, o, s)`.
    pub fn score_in(&self, corpus: &Corpus, r: RelationId, s: ArgumentId, o: ArgumentId) -> Result<f64> {
        let (base, flipped) = corpus.base_relation(r);
        if flipped {
            self.score(base, o, s)
        } else {
            self.score(base, s, o)
        }
    }

    pub fn score_gradient(&self, r: RelationId, s: ArgumentId, o: ArgumentId) -> Result<ScoreGradient> {
        self.check(r, s, o)?;
        let w = self.width();
        let mut g = ScoreGradient {
            relation: vec![0.0; w],
            subject: vec![0.0; w],
            object: vec![0.0; w],
        };
        phi_grad(
            self.kind,
            self.relation(r),
            self.argument(s),
            self.argument(o),
            1.0,
            &mut g.relation,
            &mut g.subject,
            &mut g.object,
        );
        Ok(g)
    }

    /// Cosine similarity of two relation embeddings. Complex vectors use the
    /// Hermitian product: `Re(w_p · conj(w_q)) / (‖w_p‖ ‖w_q‖)`.
    pub fn cosine_similarity(&self, p: RelationId, q: RelationId) -> Result<f64> {
        for r in [p, q] {
            if r.index() >= self.num_relations {
                return Err(Error::OutOfRange {
                    what: "relation",
                    id: r.0,
                    size: self.num_relations,
                });
            }
        }
        // Re(Σ a conj(b)) = Σ (a_re b_re + a_im b_im): the real dot product
        // of the stored rows in both layouts.
        let (a, b) = (self.relation(p), self.relation(q));
        let na = dot(a, a).sqrt();
        let nb = dot(b, b).sqrt();
        if na == 0.0 {
            return Err(Error::ZeroNorm(p.0));
        }
        if nb == 0.0 {
            return Err(Error::ZeroNorm(q.0));
        }
        Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
    }

    /// Checkpoint layout, little-endian:
    ///
    /// ```text
    /// magic "RELIMPE\0" | version u8 | kind u8 | norm u8
    /// k u32 | |R| u32 | |A| u32 | seed u64
    /// relation table f64[|R|·width] | argument table f64[|A|·width]
    /// ```
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let (kind, norm) = self.kind.code();
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&[CHECKPOINT_VERSION, kind, norm])?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.num_relations as u32).to_le_bytes())?;
        w.write_all(&(self.num_arguments as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in self.relations.iter().chain(&self.arguments) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(40 + 8 * (self.relations.len() + self.arguments.len()));
        self.write_checkpoint(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not an embedding checkpoint".into()));
        }
        let mut head = [0u8; 3];
        r.read_exact(&mut head)?;
        if head[0] != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", head[0])));
        }
        let kind = ModelKind::from_code(head[1], head[2])?;
        let dim = read_u32(&mut r)? as usize;
        let nr = read_u32(&mut r)? as usize;
        let na = read_u32(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let mut state = Self::zeros(kind, dim, nr, na).map_err(|e| Error::Format(e.to_string()))?;
        state.seed = seed;
        let mut b = [0u8; 8];
        for v in state.relations.iter_mut().chain(state.arguments.iter_mut()) {
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after embedding tables".into()));
        }
        if !state.is_finite() {
            return Err(Error::Format("checkpoint holds non-finite values".into()));
        }
        Ok(state)
    }
}

pub(crate) fn init_bound(dim: usize) -> f64 {
    0.5 / (dim as f64).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Score from raw rows.
pub(crate) fn phi(kind: ModelKind, w: &[f64], es: &[f64], eo: &[f64]) -> f64 {
    match kind {
        ModelKind::MatrixFact => w.iter().zip(es).zip(eo).map(|((w, s), o)| w * (s + o)).sum(),
        ModelKind::TransE(norm) => {
            let diffs = w.iter().zip(es).zip(eo).map(|((w, s), o)| s + w - o);
            match norm {
                TransENorm::L1 => -diffs.map(f64::abs).sum::<f64>(),
                TransENorm::L2 => -diffs.map(|d| d * d).sum::<f64>().sqrt(),
            }
        }
        ModelKind::DistMult => w.iter().zip(es).zip(eo).map(|((w, s), o)| w * (s * o)).sum(),
        ModelKind::Complex => {
            let k = w.len() / 2;
            let (wr, wi) = w.split_at(k);
            let (sr, si) = es.split_at(k);
            let (or, oi) = eo.split_at(k);
            let mut acc = 0.0;
            for i in 0..k {
                acc += wr[i] * sr[i] * or[i] + wr[i] * si[i] * oi[i] + wi[i] * sr[i] * oi[i]
                    - wi[i] * si[i] * or[i];
            }
            acc
        }
    }
}

/// Adds `upstream · ∂φ/∂(w, e_s, e_o)` into the three gradient buffers.
///
/// TransE-L1 uses subgradient 0 where a coordinate of `e_s + w_r - e_o` is
/// exactly 0; TransE-L2 uses 0 at the origin.
#[allow(clippy::too_many_arguments)]
pub(crate) fn phi_grad(
    kind: ModelKind,
    w: &[f64],
    es: &[f64],
    eo: &[f64],
    upstream: f64,
    gw: &mut [f64],
    gs: &mut [f64],
    go: &mut [f64],
) {
    match kind {
        ModelKind::MatrixFact => {
            for i in 0..w.len() {
                gw[i] += upstream * (es[i] + eo[i]);
                gs[i] += upstream * w[i];
                go[i] += upstream * w[i];
            }
        }
        ModelKind::TransE(norm) => {
            let scale = match norm {
                TransENorm::L1 => 1.0,
                TransENorm::L2 => {
                    let n = w
                        .iter()
                        .zip(es)
                        .zip(eo)
                        .map(|((w, s), o)| (s + w - o).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if n == 0.0 {
                        return;
                    }
                    1.0 / n
                }
            };
            for i in 0..w.len() {
                let d = es[i] + w[i] - eo[i];
                let g = match norm {
                    TransENorm::L1 => {
                        if d > 0.0 {
                            -1.0
                        } else if d < 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    TransENorm::L2 => -d * scale,
                } * upstream;
                gw[i] += g;
                gs[i] += g;
                go[i] -= g;
            }
        }
        ModelKind::DistMult => {
            for i in 0..w.len() {
                gw[i] += upstream * es[i] * eo[i];
                gs[i] += upstream * w[i] * eo[i];
                go[i] += upstream * es[i] * w[i];
            }
        }
        ModelKind::Complex => {
            let k = w.len() / 2;
            for i in 0..k {
                let (wr, wi) = (w[i], w[k + i]);
                let (sr, si) = (es[i], es[k + i]);
                let (or, oi) = (eo[i], eo[k + i]);
                gw[i] += upstream * (sr * or + si * oi);
                gw[k + i] += upstream * (sr * oi - si * or);
                gs[i] += upstream * (wr * or + wi * oi);
                gs[k + i] += upstream * (wr * oi - wi * or);
                go[i] += upstream * (wr * sr - wi * si);
                go[k + i] += upstream * (wr * si + wi * sr);
            }
        }
    }
}
