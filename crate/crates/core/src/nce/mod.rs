//! Pixel-level InfoNCE: loss, exact gradient, per-pixel projection head,
//! and the PCEB embedding file.
//!
//! For query `q_i` with positive `p_i` and negatives `n_1..n_{K-1}`:
//!
//! ```text
//! s_ij   = cos(q_i, x_j) / tau
//! loss_i = -log( exp(s_i+) / (exp(s_i+) + sum_j exp(s_ij-)) )
//! loss   = mean_i loss_i
//! ```
//!
//! The positive is one of the `K` denominator terms.

mod gradcheck;
mod head;
mod pceb;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use head::{ProjectionHead, DEFAULT_HIDDEN_DIM, DEFAULT_OUT_DIM};
pub use pceb::{read_pceb, split_embeddings, write_pceb, PCEB_MAGIC};

use ndarray::{s, Array2, Array3, ArrayView1, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_EMBED_DIM: usize = 128;

/// Negative embeddings: one bank shared by every query, or a separate set
/// per query.
#[derive(Clone, Debug, PartialEq)]
pub enum Negatives {
    /// `(K-1) x d`
    Shared(Array2<f64>),
    /// `M x (K-1) x d`
    PerQuery(Array3<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    queries: Array2<f64>,
    positives: Array2<f64>,
    negatives: Negatives,
    temperature: f64,
}

fn check_finite<'a>(xs: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if xs.into_iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} contain non-finite values")));
    }
    Ok(())
}

impl EmbeddingBatch {
    /// `queries` and `positives` are `M x d`. An empty query set (`M = 0`)
    /// is accepted and has zero loss.
    pub fn new(
        queries: Array2<f64>,
        positives: Array2<f64>,
        negatives: Negatives,
        temperature: f64,
    ) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
        }
        if queries.dim() != positives.dim() {
            return Err(Error::Shape(format!(
                "queries {:?} vs positives {:?}",
                queries.dim(),
                positives.dim()
            )));
        }
        let (m, d) = queries.dim();
        if d == 0 {
            return Err(Error::Shape("embedding dimension is zero".into()));
        }
        match &negatives {
            Negatives::Shared(n) => {
                if n.ncols() != d || n.nrows() == 0 {
                    return Err(Error::Shape(format!("negative bank {:?} for d={d}", n.dim())));
                }
            }
            Negatives::PerQuery(n) => {
                let (nm, k1, nd) = n.dim();
                if nm != m || nd != d || k1 == 0 {
                    return Err(Error::Shape(format!("per-query negatives {:?} for M={m}, d={d}", n.dim())));
                }
            }
        }
        check_finite(queries.iter(), "queries")?;
        check_finite(positives.iter(), "positives")?;
        match &negatives {
            Negatives::Shared(n) => check_finite(n.iter(), "negatives")?,
            Negatives::PerQuery(n) => check_finite(n.iter(), "negatives")?,
        }
        Ok(Self {
            queries,
            positives,
            negatives,
            temperature,
        })
    }

    pub fn queries(&self) -> &Array2<f64> {
        &self.queries
    }

    pub fn positives(&self) -> &Array2<f64> {
        &self.positives
    }

    pub fn negatives(&self) -> &Negatives {
        &self.negatives
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn num_queries(&self) -> usize {
        self.queries.nrows()
    }

    pub fn dim(&self) -> usize {
        self.queries.ncols()
    }

    /// Denominator size `K` (negatives plus the positive).
    pub fn k(&self) -> usize {
        1 + match &self.negatives {
            Negatives::Shared(n) => n.nrows(),
            Negatives::PerQuery(n) => n.dim().1,
        }
    }

    pub(crate) fn queries_mut(&mut self) -> &mut Array2<f64> {
        &mut self.queries
    }

    pub(crate) fn positives_mut(&mut self) -> &mut Array2<f64> {
        &mut self.positives
    }

    pub(crate) fn negatives_mut(&mut self) -> &mut Negatives {
        &mut self.negatives
    }

    fn negatives_for(&self, i: usize) -> ndarray::ArrayView2<'_, f64> {
        match &self.negatives {
            Negatives::Shared(n) => n.view(),
            Negatives::PerQuery(n) => n.index_axis(Axis(0), i),
        }
    }
}

fn norm(a: ArrayView1<f64>) -> Result<f64> {
    let n = a.dot(&a).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(n)
}

/// Temperature-scaled cosine similarity.
pub fn similarity(a: ArrayView1<f64>, b: ArrayView1<f64>, temperature: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(a.dot(&b) / (norm(a)? * norm(b)?) / temperature)
}

/// `-log softmax(logits)[0]` with logits `[positive, negatives...]`.
pub fn loss_from_logits(positive: f64, negatives: &[f64]) -> f64 {
    let m = negatives.iter().copied().fold(positive, f64::max);
    let sum: f64 = std::iter::once(positive)
        .chain(negatives.iter().copied())
        .map(|s| (s - m).exp())
        .sum();
    m + sum.ln() - positive
}

/// Gradient of [`loss_from_logits`] w.r.t. `[positive, negatives...]`:
/// `softmax - onehot(0)`.
pub fn logit_grad(positive: f64, negatives: &[f64]) -> Vec<f64> {
    let m = negatives.iter().copied().fold(positive, f64::max);
    let mut g: Vec<f64> = std::iter::once(positive)
        .chain(negatives.iter().copied())
        .map(|s| (s - m).exp())
        .collect();
    let sum: f64 = g.iter().sum();
    for x in g.iter_mut() {
        *x /= sum;
    }
    g[0] -= 1.0;
    g
}

struct QueryTerms {
    /// Unit vectors and norms for q, p, and each negative.
    q_hat: Vec<f64>,
    q_norm: f64,
    p_hat: Vec<f64>,
    p_norm: f64,
    pos: f64,
    negs: Vec<f64>,
}

fn unit(a: ArrayView1<f64>) -> Result<(Vec<f64>, f64)> {
    let n = norm(a)?;
    Ok((a.iter().map(|x| x / n).collect(), n))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Prepared {
    neg_units: Vec<(Vec<f64>, f64)>,
}

fn prepare_shared(batch: &EmbeddingBatch) -> Result<Option<Prepared>> {
    match &batch.negatives {
        Negatives::Shared(n) => Ok(Some(Prepared {
            neg_units: n.rows().into_iter().map(unit).collect::<Result<_>>()?,
        })),
        Negatives::PerQuery(_) => Ok(None),
    }
}

fn query_terms(
    batch: &EmbeddingBatch,
    i: usize,
    shared: &Option<Prepared>,
    scratch: &mut Vec<(Vec<f64>, f64)>,
) -> Result<QueryTerms> {
    let tau = batch.temperature;
    let (q_hat, q_norm) = unit(batch.queries.row(i))?;
    let (p_hat, p_norm) = unit(batch.positives.row(i))?;
    let neg_units: &[(Vec<f64>, f64)] = match shared {
        Some(p) => &p.neg_units,
        None => {
            scratch.clear();
            for r in batch.negatives_for(i).rows() {
                scratch.push(unit(r)?);
            }
            scratch
        }
    };
    let pos = dot(&q_hat, &p_hat) / tau;
    let negs = neg_units.iter().map(|(n, _)| dot(&q_hat, n) / tau).collect();
    Ok(QueryTerms {
        q_hat,
        q_norm,
        p_hat,
        p_norm,
        pos,
        negs,
    })
}

/// Mean InfoNCE loss over the batch's queries.
pub fn info_nce_loss(batch: &EmbeddingBatch) -> Result<f64> {
    let m = batch.num_queries();
    if m == 0 {
        return Ok(0.0);
    }
    let shared = prepare_shared(batch)?;
    let mut scratch = Vec::new();
    let mut total = 0.0;
    for i in 0..m {
        let t = query_terms(batch, i, &shared, &mut scratch)?;
        total += loss_from_logits(t.pos, &t.negs);
    }
    Ok(total / m as f64)
}

/// Loss and its gradient w.r.t. every embedding input.
#[derive(Clone, Debug, PartialEq)]
pub struct NceGradients {
    pub loss: f64,
    pub queries: Array2<f64>,
    pub positives: Array2<f64>,
    /// Same layout as the batch's [`Negatives`].
    pub negatives: Negatives,
}

/// `d cos(a, b) / d a` scaled by `coef`, accumulated into `out`.
#[inline]
fn add_cos_grad(out: &mut [f64], coef: f64, a_hat: &[f64], a_norm: f64, b_hat: &[f64], cos: f64) {
    let c = coef / a_norm;
    for ((o, &bh), &ah) in out.iter_mut().zip(b_hat).zip(a_hat) {
        *o += c * (bh - cos * ah);
    }
}

/// Exact analytic gradient of [`info_nce_loss`].
pub fn info_nce_grad(batch: &EmbeddingBatch) -> Result<NceGradients> {
    let (m, d) = batch.queries.dim();
    let tau = batch.temperature;
    let mut gq = Array2::<f64>::zeros((m, d));
    let mut gp = Array2::<f64>::zeros((m, d));
    let mut gn = match &batch.negatives {
        Negatives::Shared(n) => Negatives::Shared(Array2::zeros(n.dim())),
        Negatives::PerQuery(n) => Negatives::PerQuery(Array3::zeros(n.dim())),
    };
    if m == 0 {
        return Ok(NceGradients {
            loss: 0.0,
            queries: gq,
            positives: gp,
            negatives: gn,
        });
    }
    let shared = prepare_shared(batch)?;
    let mut scratch = Vec::new();
    let inv_m = 1.0 / m as f64;
    let mut total = 0.0;
    for i in 0..m {
        let t = query_terms(batch, i, &shared, &mut scratch)?;
        total += loss_from_logits(t.pos, &t.negs);
        let g = logit_grad(t.pos, &t.negs);
        let neg_units: &[(Vec<f64>, f64)] = match &shared {
            Some(p) => &p.neg_units,
            None => &scratch,
        };

        let mut dq = vec![0.0; d];
        // ds/dcos = 1/tau; dL/ds scaled by the mean.
        let coef = g[0] * inv_m / tau;
        let cos = t.pos * tau;
        add_cos_grad(&mut dq, coef, &t.q_hat, t.q_norm, &t.p_hat, cos);
        let mut dp = vec![0.0; d];
        add_cos_grad(&mut dp, coef, &t.p_hat, t.p_norm, &t.q_hat, cos);
        for (j, (n_hat, n_norm)) in neg_units.iter().enumerate() {
            let coef = g[j + 1] * inv_m / tau;
            let cos = t.negs[j] * tau;
            add_cos_grad(&mut dq, coef, &t.q_hat, t.q_norm, n_hat, cos);
            let mut dn = vec![0.0; d];
            add_cos_grad(&mut dn, coef, n_hat, *n_norm, &t.q_hat, cos);
            let row = match &mut gn {
                Negatives::Shared(a) => a.row_mut(j),
                Negatives::PerQuery(a) => a.slice_mut(s![i, j, ..]),
            };
            row.into_iter().zip(&dn).for_each(|(o, v)| *o += v);
        }
        gq.row_mut(i).iter_mut().zip(&dq).for_each(|(o, v)| *o += v);
        gp.row_mut(i).iter_mut().zip(&dp).for_each(|(o, v)| *o += v);
    }
    Ok(NceGradients {
        loss: total * inv_m,
        queries: gq,
        positives: gp,
        negatives: gn,
    })
}
