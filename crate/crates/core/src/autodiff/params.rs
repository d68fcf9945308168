use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

use super::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedParam<F> {
    pub name: String,
    pub value: Tensor<F>,
    /// Frozen parameters receive gradients but are skipped by the optimizer.
    pub trainable: bool,
}

/// Every trainable tensor of a model, addressed by [`ParamId`] and by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F> {
    params: Vec<NamedParam<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(NamedParam {
            name,
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    /// Adds a `rows x cols` tensor drawn uniformly from `[-scale, scale]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| F::lit(rng.gen_range(-scale..=scale)))
            .collect();
        self.add(name, Tensor::new(rows, cols, data).expect("sized"))
    }

    /// Glorot-uniform init for a `fan_in x fan_out` weight.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.add_uniform(name, fan_in, fan_out, scale, rng)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &NamedParam<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces the value of an existing parameter, checking the shape.
    pub fn replace(&mut self, id: ParamId, value: Tensor<F>) -> Result<()> {
        let current = &self.params[id.0].value;
        if current.shape() != value.shape() {
            return Err(Error::shape(
                "param_replace",
                format!(
                    "{}: {:?} vs {:?}",
                    self.params[id.0].name,
                    current.shape(),
                    value.shape()
                ),
            ));
        }
        self.params[id.0].value = value;
        Ok(())
    }
}

/// Gradient of one parameter: dense, or a sparse set of rows for tables
/// that were only touched through embedding lookups.
#[derive(Clone, Debug, PartialEq)]
pub enum GradBuf<F> {
    Dense(Tensor<F>),
    Rows {
        rows: usize,
        cols: usize,
        touched: BTreeMap<usize, Vec<F>>,
    },
}

impl<F: Real> GradBuf<F> {
    pub fn to_dense(&self) -> Tensor<F> {
        match self {
            GradBuf::Dense(t) => t.clone(),
            GradBuf::Rows {
                rows,
                cols,
                touched,
            } => {
                let mut t = Tensor::zeros(*rows, *cols);
                for (&r, vals) in touched {
                    t.row_slice_mut(r).copy_from_slice(vals);
                }
                t
            }
        }
    }

    /// Row indices that carry a (possibly zero) gradient entry.
    pub fn touched_rows(&self) -> Vec<usize> {
        match self {
            GradBuf::Dense(t) => (0..t.rows()).collect(),
            GradBuf::Rows { touched, .. } => touched.keys().copied().collect(),
        }
    }

    fn add_dense(&mut self, g: &Tensor<F>) {
        match self {
            GradBuf::Dense(t) => t.add_assign(g),
            GradBuf::Rows { .. } => {
                let mut dense = self.to_dense();
                dense.add_assign(g);
                *self = GradBuf::Dense(dense);
            }
        }
    }

    fn add_row(&mut self, row: usize, g: &[F]) {
        match self {
            GradBuf::Dense(t) => {
                for (a, &b) in t.row_slice_mut(row).iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            GradBuf::Rows { cols, touched, .. } => {
                let slot = touched
                    .entry(row)
                    .or_insert_with(|| vec![F::zero(); *cols]);
                for (a, &b) in slot.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
        }
    }

    fn scale(&mut self, s: F) {
        match self {
            GradBuf::Dense(t) => t.data_mut().iter_mut().for_each(|v| *v = *v * s),
            GradBuf::Rows { touched, .. } => touched
                .values_mut()
                .flatten()
                .for_each(|v| *v = *v * s),
        }
    }
}

/// Accumulated parameter gradients, one optional buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<F> {
    bufs: Vec<Option<GradBuf<F>>>,
    shapes: Vec<[usize; 2]>,
}

impl<F: Real> ParamGrads<F> {
    pub fn new(store: &ParamStore<F>) -> Self {
        Self {
            bufs: vec![None; store.len()],
            shapes: store.iter().map(|(_, p)| p.value.shape()).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&GradBuf<F>> {
        self.bufs[id.0].as_ref()
    }

    /// Dense gradient; zeros for parameters not on any path to the loss.
    pub fn dense(&self, id: ParamId) -> Tensor<F> {
        match &self.bufs[id.0] {
            Some(b) => b.to_dense(),
            None => {
                let [r, c] = self.shapes[id.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub(crate) fn accumulate_dense(&mut self, id: ParamId, g: &Tensor<F>) {
        match &mut self.bufs[id.0] {
            Some(b) => b.add_dense(g),
            slot @ None => *slot = Some(GradBuf::Dense(g.clone())),
        }
    }

    pub(crate) fn accumulate_row(&mut self, id: ParamId, row: usize, g: &[F]) {
        let [rows, cols] = self.shapes[id.0];
        let slot = self.bufs[id.0].get_or_insert_with(|| GradBuf::Rows {
            rows,
            cols,
            touched: BTreeMap::new(),
        });
        slot.add_row(row, g);
    }

    /// Adds `other` into `self`. Merge order determines floating-point
    /// rounding, so callers merge in a fixed order for reproducibility.
    pub fn merge(&mut self, other: &ParamGrads<F>) {
        for (i, buf) in other.bufs.iter().enumerate() {
            let Some(buf) = buf else { continue };
            let id = ParamId(i);
            match buf {
                GradBuf::Dense(t) => self.accumulate_dense(id, t),
                GradBuf::Rows { touched, .. } => {
                    for (&r, vals) in touched {
                        self.accumulate_row(id, r, vals);
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for b in self.bufs.iter_mut().flatten() {
            b.scale(s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.bufs.iter().flatten().all(|b| match b {
            GradBuf::Dense(t) => t.all_finite(),
            GradBuf::Rows { touched, .. } => touched.values().flatten().all(|v| v.is_finite()),
        })
    }
}
