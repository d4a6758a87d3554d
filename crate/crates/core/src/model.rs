//! Shared vocabulary: collectives, datatypes, reduction operators, per-rank
//! buffers and the textbook reference implementation every algorithm is
//! checked against.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveKind {
    Allreduce,
    ReduceScatter,
    Allgather,
    Alltoall,
}

impl CollectiveKind {
    pub const ALL: [CollectiveKind; 4] = [
        CollectiveKind::Allreduce,
        CollectiveKind::ReduceScatter,
        CollectiveKind::Allgather,
        CollectiveKind::Alltoall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CollectiveKind::Allreduce => "allreduce",
            CollectiveKind::ReduceScatter => "reduce_scatter",
            CollectiveKind::Allgather => "allgather",
            CollectiveKind::Alltoall => "alltoall",
        }
    }

    /// Whether the collective combines data with a [`ReduceOp`].
    pub fn reduces(self) -> bool {
        matches!(self, CollectiveKind::Allreduce | CollectiveKind::ReduceScatter)
    }

    /// Element counts `(input, output)` per rank for a collective whose
    /// message size is `n` elements.
    ///
    /// The message size is the full vector for allreduce, reduce-scatter and
    /// alltoall, and the gathered result for allgather.
    pub fn buffer_elems(self, n: usize, p: usize) -> (usize, usize) {
        match self {
            CollectiveKind::Allreduce | CollectiveKind::Alltoall => (n, n),
            CollectiveKind::ReduceScatter => (n, n / p),
            CollectiveKind::Allgather => (n / p, n),
        }
    }
}

impl fmt::Display for CollectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CollectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        CollectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || k.name().replace('_', "") == norm)
            .ok_or_else(|| Error::usage(format!("unknown collective `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Int32,
    Int64,
    Float32,
    Float64,
}

impl DataType {
    pub const ALL: [DataType; 4] = [
        DataType::Int32,
        DataType::Int64,
        DataType::Float32,
        DataType::Float64,
    ];

    pub fn width(self) -> usize {
        match self {
            DataType::Int32 | DataType::Float32 => 4,
            DataType::Int64 | DataType::Float64 => 8,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DataType::Float32 | DataType::Float64)
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::Int32 => "int32",
            DataType::Int64 => "int64",
            DataType::Float32 => "float32",
            DataType::Float64 => "float64",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DataType::ALL
            .into_iter()
            .find(|d| d.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::usage(format!("unknown datatype `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceOp {
    Sum,
    Max,
    Min,
}

impl ReduceOp {
    pub fn name(self) -> &'static str {
        match self {
            ReduceOp::Sum => "sum",
            ReduceOp::Max => "max",
            ReduceOp::Min => "min",
        }
    }
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReduceOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(ReduceOp::Sum),
            "max" => Ok(ReduceOp::Max),
            "min" => Ok(ReduceOp::Min),
            _ => Err(Error::usage(format!("unknown reduce op `{s}`"))),
        }
    }
}

/// Where an action's time is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTag {
    Alloc,
    Copy,
    Reduction,
    Communication,
    Sync,
}

impl PhaseTag {
    pub const ALL: [PhaseTag; 5] = [
        PhaseTag::Alloc,
        PhaseTag::Copy,
        PhaseTag::Reduction,
        PhaseTag::Communication,
        PhaseTag::Sync,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhaseTag::Alloc => "alloc",
            PhaseTag::Copy => "copy",
            PhaseTag::Reduction => "reduction",
            PhaseTag::Communication => "communication",
            PhaseTag::Sync => "sync",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhaseTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PhaseTag::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::usage(format!("unknown phase `{s}`")))
    }
}

/// Scalar element types the fabric can move and reduce.
pub trait Element: Copy + Send + Sync + PartialEq + fmt::Debug + fmt::Display + 'static {
    const DTYPE: DataType;

    fn zero() -> Self;
    fn combine(self, other: Self, op: ReduceOp) -> Self;
    fn identity(op: ReduceOp) -> Self;
    fn from_i64(v: i64) -> Self;
    fn wrap(v: Vec<Self>) -> Data;
    fn view(d: &Data) -> Option<&[Self]>;
}

macro_rules! int_element {
    ($t:ty, $variant:ident) => {
        impl Element for $t {
            const DTYPE: DataType = DataType::$variant;

            fn zero() -> Self {
                0
            }

            fn combine(self, other: Self, op: ReduceOp) -> Self {
                match op {
                    ReduceOp::Sum => self.wrapping_add(other),
                    ReduceOp::Max => self.max(other),
                    ReduceOp::Min => self.min(other),
                }
            }

            fn identity(op: ReduceOp) -> Self {
                match op {
                    ReduceOp::Sum => 0,
                    ReduceOp::Max => <$t>::MIN,
                    ReduceOp::Min => <$t>::MAX,
                }
            }

            fn from_i64(v: i64) -> Self {
                v as $t
            }

            fn wrap(v: Vec<Self>) -> Data {
                Data::$variant(v)
            }

            fn view(d: &Data) -> Option<&[Self]> {
                match d {
                    Data::$variant(v) => Some(v),
                    _ => None,
                }
            }
        }
    };
}

macro_rules! float_element {
    ($t:ty, $variant:ident) => {
        impl Element for $t {
            const DTYPE: DataType = DataType::$variant;

            fn zero() -> Self {
                0.0
            }

            fn combine(self, other: Self, op: ReduceOp) -> Self {
                match op {
                    ReduceOp::Sum => self + other,
                    ReduceOp::Max => self.max(other),
                    ReduceOp::Min => self.min(other),
                }
            }

            fn identity(op: ReduceOp) -> Self {
                match op {
                    ReduceOp::Sum => 0.0,
                    ReduceOp::Max => <$t>::NEG_INFINITY,
                    ReduceOp::Min => <$t>::INFINITY,
                }
            }

            fn from_i64(v: i64) -> Self {
                v as $t
            }

            fn wrap(v: Vec<Self>) -> Data {
                Data::$variant(v)
            }

            fn view(d: &Data) -> Option<&[Self]> {
                match d {
                    Data::$variant(v) => Some(v),
                    _ => None,
                }
            }
        }
    };
}

int_element!(i32, Int32);
int_element!(i64, Int64);
float_element!(f32, Float32);
float_element!(f64, Float64);

/// A typed element sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Int32(Vec<i32>),
    Int64(Vec<i64>),
    Float32(Vec<f32>),
    Float64(Vec<f64>),
}

/// Dispatches a generic body over the concrete vector inside a [`Data`].
macro_rules! with_data {
    ($data:expr, $v:ident => $body:expr) => {
        match $data {
            $crate::model::Data::Int32($v) => $body,
            $crate::model::Data::Int64($v) => $body,
            $crate::model::Data::Float32($v) => $body,
            $crate::model::Data::Float64($v) => $body,
        }
    };
}

impl Data {
    pub fn dtype(&self) -> DataType {
        match self {
            Data::Int32(_) => DataType::Int32,
            Data::Int64(_) => DataType::Int64,
            Data::Float32(_) => DataType::Float32,
            Data::Float64(_) => DataType::Float64,
        }
    }

    pub fn len(&self) -> usize {
        with_data!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A buffer of `len` elements, all equal to `value` converted to `dtype`.
    pub fn filled(dtype: DataType, len: usize, value: i64) -> Data {
        match dtype {
            DataType::Int32 => Data::Int32(vec![value as i32; len]),
            DataType::Int64 => Data::Int64(vec![value; len]),
            DataType::Float32 => Data::Float32(vec![value as f32; len]),
            DataType::Float64 => Data::Float64(vec![value as f64; len]),
        }
    }

    /// Converts a sequence of integers to `dtype`.
    pub fn from_i64s(dtype: DataType, values: &[i64]) -> Data {
        match dtype {
            DataType::Int32 => Data::Int32(values.iter().map(|&v| v as i32).collect()),
            DataType::Int64 => Data::Int64(values.to_vec()),
            DataType::Float32 => Data::Float32(values.iter().map(|&v| v as f32).collect()),
            DataType::Float64 => Data::Float64(values.iter().map(|&v| v as f64).collect()),
        }
    }

    /// The identity vector of `op` for `dtype`.
    pub fn identity(dtype: DataType, len: usize, op: ReduceOp) -> Data {
        match dtype {
            DataType::Int32 => Data::Int32(vec![i32::identity(op); len]),
            DataType::Int64 => Data::Int64(vec![i64::identity(op); len]),
            DataType::Float32 => Data::Float32(vec![f32::identity(op); len]),
            DataType::Float64 => Data::Float64(vec![f64::identity(op); len]),
        }
    }

    /// Element `i` rendered as text, for diagnostics.
    pub fn display_at(&self, i: usize) -> String {
        with_data!(self, v => v.get(i).map(|x| x.to_string()).unwrap_or_default())
    }

    pub(crate) fn slice(&self, start: usize, len: usize) -> Data {
        with_data!(self, v => Element::wrap(v[start..start + len].to_vec()))
    }

    pub(crate) fn concat(parts: &[&Data]) -> Result<Data> {
        let first = parts
            .first()
            .ok_or_else(|| Error::usage("cannot concatenate zero buffers"))?;
        let dtype = first.dtype();
        if parts.iter().any(|p| p.dtype() != dtype) {
            return Err(Error::usage("mixed datatypes in concatenation"));
        }
        fn cat<T: Element>(parts: &[&Data]) -> Data {
            let mut out = Vec::new();
            for p in parts {
                out.extend_from_slice(T::view(p).expect("dtype checked"));
            }
            T::wrap(out)
        }
        Ok(match dtype {
            DataType::Int32 => cat::<i32>(parts),
            DataType::Int64 => cat::<i64>(parts),
            DataType::Float32 => cat::<f32>(parts),
            DataType::Float64 => cat::<f64>(parts),
        })
    }
}

/// One rank's buffer in a collective.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    pub rank: usize,
    pub data: Data,
}

impl RankVector {
    pub fn new(rank: usize, data: Data) -> Self {
        RankVector { rank, data }
    }
}

pub fn reduce_slices<T: Element>(a: &[T], b: &[T], op: ReduceOp) -> Result<Vec<T>> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "length mismatch in reduction: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x.combine(y, op)).collect())
}

/// `out[i] = op(a[i], b[i])`.
pub fn reduce_elementwise(a: &Data, b: &Data, op: ReduceOp) -> Result<Data> {
    match (a, b) {
        (Data::Int32(x), Data::Int32(y)) => reduce_slices(x, y, op).map(Data::Int32),
        (Data::Int64(x), Data::Int64(y)) => reduce_slices(x, y, op).map(Data::Int64),
        (Data::Float32(x), Data::Float32(y)) => reduce_slices(x, y, op).map(Data::Float32),
        (Data::Float64(x), Data::Float64(y)) => reduce_slices(x, y, op).map(Data::Float64),
        _ => Err(Error::usage(format!(
            "datatype mismatch in reduction: {} vs {}",
            a.dtype(),
            b.dtype()
        ))),
    }
}

/// Textbook semantics of each collective, reducing in rank order `0..p`.
///
/// Inputs must be ordered by rank. For allgather every rank contributes its
/// whole input; for reduce-scatter and alltoall the input length must be a
/// multiple of `p`.
pub fn naive_oracle(kind: CollectiveKind, inputs: &[RankVector], op: ReduceOp) -> Result<Vec<RankVector>> {
    let p = inputs.len();
    if p == 0 {
        return Err(Error::usage("collective needs at least one rank"));
    }
    for (i, rv) in inputs.iter().enumerate() {
        if rv.rank != i {
            return Err(Error::usage(format!("input {i} carries rank {}", rv.rank)));
        }
    }
    let len = inputs[0].data.len();
    if inputs.iter().any(|rv| rv.data.len() != len) {
        return Err(Error::usage("ranks hold different element counts"));
    }
    if matches!(kind, CollectiveKind::ReduceScatter | CollectiveKind::Alltoall) && !len.is_multiple_of(p) {
        return Err(Error::usage(format!(
            "{kind} needs the element count ({len}) divisible by p={p}"
        )));
    }

    let reduce_all = || -> Result<Data> {
        let mut acc = inputs[0].data.clone();
        for rv in &inputs[1..] {
            acc = reduce_elementwise(&acc, &rv.data, op)?;
        }
        Ok(acc)
    };

    let out = match kind {
        CollectiveKind::Allreduce => {
            let total = reduce_all()?;
            (0..p).map(|r| RankVector::new(r, total.clone())).collect()
        }
        CollectiveKind::ReduceScatter => {
            let total = reduce_all()?;
            let block = len / p;
            (0..p)
                .map(|r| RankVector::new(r, total.slice(r * block, block)))
                .collect()
        }
        CollectiveKind::Allgather => {
            let parts: Vec<&Data> = inputs.iter().map(|rv| &rv.data).collect();
            let all = Data::concat(&parts)?;
            (0..p).map(|r| RankVector::new(r, all.clone())).collect()
        }
        CollectiveKind::Alltoall => {
            let block = len / p;
            (0..p)
                .map(|r| {
                    let parts: Vec<Data> = inputs.iter().map(|src| src.data.slice(r * block, block)).collect();
                    let refs: Vec<&Data> = parts.iter().collect();
                    Data::concat(&refs).map(|d| RankVector::new(r, d))
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ints(v: &[i64]) -> Data {
        Data::from_i64s(DataType::Int64, v)
    }

    fn rv(rank: usize, v: &[i64]) -> RankVector {
        RankVector::new(rank, ints(v))
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(reduce_elementwise(&ints(&[1, 2, 3]), &ints(&[4, 5, 6]), ReduceOp::Sum).unwrap(), ints(&[5, 7, 9]));
        assert_eq!(reduce_elementwise(&ints(&[1, 9]), &ints(&[5, 2]), ReduceOp::Max).unwrap(), ints(&[5, 9]));
        assert_eq!(reduce_elementwise(&ints(&[1, 9]), &ints(&[5, 2]), ReduceOp::Min).unwrap(), ints(&[1, 2]));
    }

    #[test]
    fn identity_is_neutral() {
        for dtype in DataType::ALL {
            for op in [ReduceOp::Sum, ReduceOp::Max, ReduceOp::Min] {
                let x = Data::from_i64s(dtype, &[-3, 0, 7, 12]);
                let id = Data::identity(dtype, 4, op);
                assert_eq!(reduce_elementwise(&x, &id, op).unwrap(), x, "{dtype} {op}");
            }
        }
    }

    #[test]
    fn length_and_type_mismatch_are_usage_errors() {
        assert!(matches!(
            reduce_elementwise(&ints(&[1, 2]), &ints(&[1]), ReduceOp::Sum),
            Err(Error::Usage(_))
        ));
        let f = Data::Float32(vec![1.0, 2.0]);
        assert!(matches!(reduce_elementwise(&ints(&[1, 2]), &f, ReduceOp::Sum), Err(Error::Usage(_))));
    }

    #[test]
    fn oracle_examples() {
        let inputs: Vec<_> = (0..4).map(|r| rv(r, &[r as i64, r as i64])).collect();
        for out in naive_oracle(CollectiveKind::Allreduce, &inputs, ReduceOp::Sum).unwrap() {
            assert_eq!(out.data, ints(&[6, 6]));
        }

        let out = naive_oracle(CollectiveKind::Allgather, &[rv(0, &[1]), rv(1, &[2])], ReduceOp::Sum).unwrap();
        assert_eq!(out[0].data, ints(&[1, 2]));
        assert_eq!(out[1].data, ints(&[1, 2]));

        let out = naive_oracle(CollectiveKind::ReduceScatter, &[rv(0, &[1, 2]), rv(1, &[3, 4])], ReduceOp::Sum).unwrap();
        assert_eq!(out[0].data, ints(&[4]));
        assert_eq!(out[1].data, ints(&[6]));

        let out = naive_oracle(CollectiveKind::Alltoall, &[rv(0, &[1, 2]), rv(1, &[3, 4])], ReduceOp::Sum).unwrap();
        assert_eq!(out[0].data, ints(&[1, 3]));
        assert_eq!(out[1].data, ints(&[2, 4]));
    }

    #[test]
    fn oracle_rejects_indivisible_blocks() {
        let inputs = vec![rv(0, &[1, 2, 3]), rv(1, &[4, 5, 6])];
        assert!(matches!(
            naive_oracle(CollectiveKind::ReduceScatter, &inputs, ReduceOp::Sum),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            naive_oracle(CollectiveKind::Alltoall, &inputs, ReduceOp::Sum),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn allreduce_is_reduce_scatter_then_allgather() {
        for p in 1..=16usize {
            for blocks in 1..=(64 / p) {
                let len = blocks * p;
                let inputs: Vec<_> = (0..p)
                    .map(|r| {
                        let v: Vec<i64> = (0..len).map(|i| (r * 31 + i * 7) as i64 % 17 - 8).collect();
                        rv(r, &v)
                    })
                    .collect();
                let full = naive_oracle(CollectiveKind::Allreduce, &inputs, ReduceOp::Sum).unwrap();
                let scattered = naive_oracle(CollectiveKind::ReduceScatter, &inputs, ReduceOp::Sum).unwrap();
                let gathered = naive_oracle(CollectiveKind::Allgather, &scattered, ReduceOp::Sum).unwrap();
                assert_eq!(full, gathered, "p={p} len={len}");
            }
        }
    }

    proptest! {
        #[test]
        fn integer_reduction_commutes_and_associates(
            a in proptest::collection::vec(any::<i32>(), 8),
            b in proptest::collection::vec(any::<i32>(), 8),
            c in proptest::collection::vec(any::<i32>(), 8),
            op in prop_oneof![Just(ReduceOp::Sum), Just(ReduceOp::Max), Just(ReduceOp::Min)],
        ) {
            let (a, b, c) = (Data::Int32(a), Data::Int32(b), Data::Int32(c));
            prop_assert_eq!(reduce_elementwise(&a, &b, op).unwrap(), reduce_elementwise(&b, &a, op).unwrap());
            let left = reduce_elementwise(&reduce_elementwise(&a, &b, op).unwrap(), &c, op).unwrap();
            let right = reduce_elementwise(&a, &reduce_elementwise(&b, &c, op).unwrap(), op).unwrap();
            prop_assert_eq!(left, right);
        }
    }
}
