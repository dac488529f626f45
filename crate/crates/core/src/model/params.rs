use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Bias vectors and the soft prompt are rank one; weight matrices rank two.
    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

/// Ordered segment table describing a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, trainable: bool) {
        let seg = Segment {
            name: name.into(),
            shape,
            trainable,
            offset: self.total,
        };
        self.total += seg.len();
        self.segments.push(seg);
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        self.segments.iter().map(|s| s.trainable).collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.segments.iter().filter(|s| s.trainable).map(Segment::len).sum()
    }
}

/// Flat parameter storage plus the layout that gives it meaning.
///
/// Global models, client models and client deltas all use this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T> {
    values: Vec<T>,
    layout: Arc<Layout>,
}

impl<T: Scalar> ParameterVector<T> {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self {
            values: vec![T::zero(); layout.total()],
            layout,
        }
    }

    /// Wraps `values`; rejects a length that disagrees with the layout and
    /// any NaN or infinite entry.
    pub fn from_values(layout: Arc<Layout>, values: Vec<T>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: layout.total(),
                actual: values.len(),
            });
        }
        let pv = Self { values, layout };
        if !pv.is_finite() {
            return Err(Error::NonFinite("from_values"));
        }
        Ok(pv)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn layout_arc(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[T]> {
        self.layout.segment(name).map(|s| &self.values[s.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    /// `self - base`, coordinate-wise.
    pub fn delta_from(&self, base: &Self) -> Result<Self> {
        if !self.same_layout(base) {
            return Err(Error::LayoutMismatch("delta base"));
        }
        let values = self
            .values
            .iter()
            .zip(&base.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Self {
            values,
            layout: Arc::clone(&self.layout),
        })
    }

    /// Sets every entry of non-trainable segments to zero.
    pub(crate) fn mask_frozen(&mut self) {
        for seg in self.layout.segments() {
            if !seg.trainable {
                self.values[seg.range()].fill(T::zero());
            }
        }
    }

    /// FNV-1a over the raw bit patterns; identifies a parameter snapshot.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        for v in &self.values {
            for byte in v.bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(PRIME);
            }
        }
        h
    }

    pub fn l2_norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }
}
