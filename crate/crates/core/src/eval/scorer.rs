use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, Side, Triple};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScorerKind {
    /// `-||h + r - t||`
    Translational,
    /// `sum_d h_d r_d t_d`
    Bilinear,
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Translational => "translational",
            ScorerKind::Bilinear => "bilinear",
        })
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translational" | "transe" => Ok(ScorerKind::Translational),
            "bilinear" | "distmult" => Ok(ScorerKind::Bilinear),
            _ => Err(Error::Config(format!(
                "unknown scorer `{s}` (expected translational or bilinear)"
            ))),
        }
    }
}

/// Score of one triple from its three vectors.
pub fn score_vectors<T: Scalar>(kind: ScorerKind, h: ArrayView1<T>, r: ArrayView1<T>, t: ArrayView1<T>) -> T {
    match kind {
        ScorerKind::Translational => {
            let sq: T = h
                .iter()
                .zip(r)
                .zip(t)
                .map(|((&h, &r), &t)| {
                    let d = h + r - t;
                    d * d
                })
                .sum();
            -sq.sqrt()
        }
        ScorerKind::Bilinear => h.iter().zip(r).zip(t).map(|((&h, &r), &t)| h * r * t).sum(),
    }
}

/// Gradients of the score with respect to `h`, `r` and `t`.
pub fn score_gradients<T: Scalar>(
    kind: ScorerKind,
    h: ArrayView1<T>,
    r: ArrayView1<T>,
    t: ArrayView1<T>,
) -> (Array1<T>, Array1<T>, Array1<T>) {
    match kind {
        ScorerKind::Translational => {
            let d = &h + &r - t;
            let norm = d.dot(&d).sqrt();
            // subgradient 0 at the optimum
            let g = if norm > T::zero() { d.mapv(|v| -v / norm) } else { Array1::zeros(d.len()) };
            let gt = g.mapv(|v| -v);
            (g.clone(), g, gt)
        }
        ScorerKind::Bilinear => (&r * &t, &h * &t, &h * &r),
    }
}

/// Entity and relation tables of a downstream scoring model.
#[derive(Clone, Debug, PartialEq)]
pub struct Scorer<T> {
    pub kind: ScorerKind,
    pub entities: Array2<T>,
    pub relations: Array2<T>,
}

impl<T: Scalar> Scorer<T> {
    pub fn new(kind: ScorerKind, entities: Array2<T>, relations: Array2<T>) -> Result<Self> {
        if entities.ncols() != relations.ncols() {
            return Err(Error::Config(format!(
                "entity dim {} differs from relation dim {}",
                entities.ncols(),
                relations.ncols()
            )));
        }
        Ok(Scorer {
            kind,
            entities,
            relations,
        })
    }

    pub fn dim(&self) -> usize {
        self.entities.ncols()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.nrows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.nrows()
    }

    fn check(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<()> {
        for e in [h, t] {
            if e as usize >= self.num_entities() {
                return Err(Error::UnknownToken {
                    kind: "entity",
                    name: e.to_string(),
                });
            }
        }
        if r as usize >= self.num_relations() {
            return Err(Error::UnknownToken {
                kind: "relation",
                name: r.to_string(),
            });
        }
        Ok(())
    }

    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<T> {
        self.check(h, r, t)?;
        Ok(self.score_unchecked(h, r, t))
    }

    pub(crate) fn score_unchecked(&self, h: EntityId, r: RelationId, t: EntityId) -> T {
        score_vectors(
            self.kind,
            self.entities.row(h as usize),
            self.relations.row(r as usize),
            self.entities.row(t as usize),
        )
    }

    /// Scores of `triple` with every entity substituted on `side`, computed
    /// with exactly the arithmetic of [`Scorer::score`].
    pub fn score_candidates(&self, triple: Triple, side: Side) -> Result<Vec<T>> {
        self.check(triple.head, triple.relation, triple.tail)?;
        let r = self.relations.row(triple.relation as usize);
        let h = self.entities.row(triple.head as usize);
        let t = self.entities.row(triple.tail as usize);
        Ok(self
            .entities
            .rows()
            .into_iter()
            .map(|c| match side {
                Side::Head => score_vectors(self.kind, c, r, t),
                Side::Tail => score_vectors(self.kind, h, r, c),
            })
            .collect())
    }
}
