//! Weight codebooks and synthetic/imported quantized tensors.
//!
//! All randomness comes from `ChaCha8Rng` (the `rand_chacha` crate), seeded
//! with `seed_from_u64(seed)`. Separate ChaCha streams are used for zero
//! placement and for value draws, so changing `U` never moves the zeros.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{LayerShape, QuantTensor};

const STREAM_WEIGHT_ZEROS: u64 = 0;
const STREAM_WEIGHT_VALUES: u64 = 1;
const STREAM_INPUT_ZEROS: u64 = 2;
const STREAM_INPUT_VALUES: u64 = 3;

/// The distinct weights of a layer, stored in canonical order: ascending value
/// with zero moved to the end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct CodeBook {
    values: Vec<i64>,
    lookup: HashMap<i64, usize>,
}

impl TryFrom<Vec<i64>> for CodeBook {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        Self::rebuild(v)
    }
}

impl From<CodeBook> for Vec<i64> {
    fn from(cb: CodeBook) -> Self {
        cb.values
    }
}

impl CodeBook {
    pub fn from_values(values: impl IntoIterator<Item = i64>) -> Result<Self> {
        let mut v: Vec<i64> = values.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(Error::Config("codebook needs at least one value".into()));
        }
        if let Ok(z) = v.binary_search(&0) {
            v.remove(z);
            v.push(0);
        }
        Ok(Self::from_canonical(v))
    }

    fn from_canonical(values: Vec<i64>) -> Self {
        let lookup = values.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        Self { values, lookup }
    }

    /// Restores the lookup after deserializing.
    pub fn rebuild(values: Vec<i64>) -> Result<Self> {
        let cb = Self::from_values(values.iter().copied())?;
        if cb.values != values {
            return Err(Error::Format("codebook is not in canonical order".into()));
        }
        Ok(cb)
    }

    /// Distinct values in canonical order.
    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> i64 {
        self.values[index]
    }

    pub fn index_of(&self, value: i64) -> Result<usize> {
        self.lookup.get(&value).copied().ok_or(Error::NotInCodebook(value))
    }

    pub fn zero_index(&self) -> Option<usize> {
        (self.values.last() == Some(&0)).then(|| self.values.len() - 1)
    }

    pub fn nonzero_len(&self) -> usize {
        self.values.len() - usize::from(self.zero_index().is_some())
    }

    /// Bits to store the values themselves.
    pub fn storage_bits(&self, precision_bits: u8) -> u64 {
        self.values.len() as u64 * u64::from(precision_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub weight_density: f64,
    pub input_density: f64,
    pub u_target: usize,
    pub seed: u64,
}

impl DensitySpec {
    pub fn new(weight_density: f64, u_target: usize, seed: u64) -> Self {
        Self { weight_density, input_density: 1.0, u_target, seed }
    }
}

fn check_fraction(name: &str, d: f64) -> Result<()> {
    if !(d > 0.0 && d <= 1.0) {
        return Err(Error::Config(format!("{name} must be in (0, 1], got {d}")));
    }
    Ok(())
}

fn zero_count(total: usize, density: f64) -> usize {
    (((1.0 - density) * total as f64).round() as usize).min(total)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `n` distinct non-zero values spread evenly over the representable range,
/// preferring odd values.
pub fn spread_nonzero_values(n: usize, precision_bits: u8) -> Result<Vec<i64>> {
    if !(2..=32).contains(&precision_bits) {
        return Err(Error::Config(format!(
            "synthetic generation supports 2..=32 bit precision, got {precision_bits}"
        )));
    }
    let half = 1i64 << (precision_bits - 1);
    let odd: Vec<i64> = (0..half).map(|j| 2 * j - (half - 1)).collect();
    let all: Vec<i64> = (-half..half).filter(|&v| v != 0).collect();
    let pool = if n <= odd.len() {
        odd
    } else if n <= all.len() {
        all
    } else {
        return Err(Error::Config(format!(
            "{n} distinct non-zero values do not fit in {precision_bits} bits"
        )));
    };
    Ok(match n {
        0 => Vec::new(),
        1 => vec![pool[pool.len() / 2]],
        _ => (0..n).map(|i| pool[i * (pool.len() - 1) / (n - 1)]).collect(),
    })
}

/// Filters `[K,C,S,R]` with exactly `round((1-d)*N)` zeros and the remaining
/// weights drawn uniformly over the non-zero codebook values.
pub fn gen_synthetic_filters(
    shape: &LayerShape,
    spec: &DensitySpec,
    precision_bits: u8,
) -> Result<(QuantTensor, CodeBook)> {
    shape.validate()?;
    check_fraction("weight density", spec.weight_density)?;
    let n = shape.weight_count();
    let zeros = zero_count(n, spec.weight_density);
    let u = spec.u_target;
    if u == 0 {
        return Err(Error::Config("U must be at least 1".into()));
    }
    if zeros > 0 && u < 2 {
        return Err(Error::Config(format!(
            "weight density {} needs a zero in the codebook, so U must be at least 2",
            spec.weight_density
        )));
    }
    let representable = 1u128 << precision_bits.min(127);
    if u as u128 > representable {
        return Err(Error::Config(format!(
            "U={u} exceeds the {representable} values representable in {precision_bits} bits"
        )));
    }
    // Without zeros every codebook slot is a non-zero value, unless that is
    // impossible at this precision; then zero is kept as an unused member.
    let nonzero_slots = if zeros > 0 || u as u128 == representable { u - 1 } else { u };
    let nonzero = spread_nonzero_values(nonzero_slots, precision_bits)?;
    let mut members = nonzero.clone();
    if nonzero_slots < u {
        members.push(0);
    }
    let codebook = CodeBook::from_values(members)?;

    let mut is_zero = vec![false; n];
    for i in index::sample(&mut rng(spec.seed, STREAM_WEIGHT_ZEROS), n, zeros) {
        is_zero[i] = true;
    }
    let mut vals = rng(spec.seed, STREAM_WEIGHT_VALUES);
    let data = is_zero
        .iter()
        .map(|&z| if z { 0 } else { nonzero[vals.gen_range(0..nonzero.len())] })
        .collect();
    let t = QuantTensor::new(shape.filter_dims().to_vec(), data, precision_bits)?;
    Ok((t, codebook))
}

/// Post-activation style inputs `[C,H,W]`: exact non-zero count, positive values.
pub fn gen_synthetic_inputs(
    shape: &LayerShape,
    input_density: f64,
    seed: u64,
    precision_bits: u8,
) -> Result<QuantTensor> {
    shape.validate()?;
    check_fraction("input density", input_density)?;
    if !(2..=32).contains(&precision_bits) {
        return Err(Error::Config(format!("unsupported input precision {precision_bits}")));
    }
    let n = shape.input_len();
    let zeros = zero_count(n, input_density);
    let mut is_zero = vec![false; n];
    for i in index::sample(&mut rng(seed, STREAM_INPUT_ZEROS), n, zeros) {
        is_zero[i] = true;
    }
    let hi = (1i64 << (precision_bits - 1)) - 1;
    let mut vals = rng(seed, STREAM_INPUT_VALUES);
    let data = is_zero
        .iter()
        .map(|&z| if z { 0 } else { vals.gen_range(1..=hi) })
        .collect();
    QuantTensor::new(shape.input_dims().to_vec(), data, precision_bits)
}

#[derive(Debug, Clone)]
pub struct Imported {
    pub tensor: QuantTensor,
    pub codebook: CodeBook,
    /// Set when the distinct-value count exceeded the configured ceiling.
    pub exceeds_ceiling: bool,
}

/// Loads a quantized tensor and derives its codebook. Exceeding `u_ceiling`
/// only warns: the weight buffer is assumed to be provisioned larger.
pub fn import_quantized(path: impl AsRef<Path>, u_ceiling: Option<usize>) -> Result<Imported> {
    let tensor = QuantTensor::load(path.as_ref())?;
    let codebook = CodeBook::from_values(tensor.data.iter().copied()).map_err(|_| {
        Error::Format(format!("{} holds no weights", path.as_ref().display()))
    })?;
    let exceeds_ceiling = u_ceiling.is_some_and(|c| codebook.len() > c);
    if exceeds_ceiling {
        log::warn!(
            "{}: {} unique weights exceed the configured ceiling of {}",
            path.as_ref().display(),
            codebook.len(),
            u_ceiling.unwrap_or_default()
        );
    }
    Ok(Imported { tensor, codebook, exceeds_ceiling })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_puts_zero_last() {
        let cb = CodeBook::from_values([3, 0, -1, 3, 7]).unwrap();
        assert_eq!(cb.values(), &[-1, 3, 7, 0]);
        assert_eq!(cb.zero_index(), Some(3));
        assert_eq!(cb.index_of(7).unwrap(), 2);
        assert!(matches!(cb.index_of(5), Err(Error::NotInCodebook(5))));
        assert_eq!(CodeBook::from_values([4, 2]).unwrap().zero_index(), None);
    }

    #[test]
    fn exact_zero_count() {
        let sh = LayerShape::new(3, 3, 4, 3, 3, 2);
        let (f, cb) = gen_synthetic_filters(&sh, &DensitySpec::new(0.5, 3, 9), 8).unwrap();
        assert_eq!(f.data.iter().filter(|&&v| v == 0).count(), 36);
        assert_eq!(cb.len(), 3);
        assert!(f.data.iter().all(|v| cb.index_of(*v).is_ok()));
    }

    #[test]
    fn dense_single_value() {
        let sh = LayerShape::new(3, 3, 2, 3, 3, 2);
        let (f, cb) = gen_synthetic_filters(&sh, &DensitySpec::new(1.0, 1, 1), 8).unwrap();
        assert_eq!(cb.len(), 1);
        assert!(f.data.iter().all(|&v| v == cb.value(0) && v != 0));
    }

    #[test]
    fn seeds_are_deterministic_and_zero_pattern_ignores_u() {
        let sh = LayerShape::new(5, 5, 8, 3, 3, 4);
        let a = gen_synthetic_filters(&sh, &DensitySpec::new(0.65, 17, 42), 16).unwrap();
        let b = gen_synthetic_filters(&sh, &DensitySpec::new(0.65, 17, 42), 16).unwrap();
        assert_eq!(a.0, b.0);
        let c = gen_synthetic_filters(&sh, &DensitySpec::new(0.65, 3, 42), 16).unwrap();
        let zeros = |t: &QuantTensor| t.data.iter().map(|&v| v == 0).collect::<Vec<_>>();
        assert_eq!(zeros(&a.0), zeros(&c.0));
        let d = gen_synthetic_filters(&sh, &DensitySpec::new(0.65, 17, 43), 16).unwrap();
        assert_ne!(a.0, d.0);
    }

    #[test]
    fn full_byte_codebook() {
        let sh = LayerShape::new(16, 16, 16, 3, 3, 16);
        let (_, cb) = gen_synthetic_filters(&sh, &DensitySpec::new(0.5, 256, 1), 8).unwrap();
        assert_eq!(cb.len(), 256);
        let (_, cb) = gen_synthetic_filters(&sh, &DensitySpec::new(1.0, 256, 1), 8).unwrap();
        assert_eq!(cb.len(), 256);
        assert!(gen_synthetic_filters(&sh, &DensitySpec::new(1.0, 257, 1), 8).is_err());
        assert!(gen_synthetic_filters(&sh, &DensitySpec::new(0.5, 1, 1), 8).is_err());
    }

    #[test]
    fn spread_values_are_distinct_and_in_range() {
        for (n, p) in [(2usize, 8u8), (16, 8), (128, 8), (200, 8), (255, 8), (63, 16)] {
            let v = spread_nonzero_values(n, p).unwrap();
            let mut d = v.clone();
            d.dedup();
            assert_eq!(d.len(), n);
            assert!(v.iter().all(|&x| x != 0 && crate::tensor::fits_in(x, p)));
        }
        assert!(spread_nonzero_values(256, 8).is_err());
    }

    #[test]
    fn input_density_counts() {
        let sh = LayerShape::new(10, 10, 10, 1, 1, 1);
        let t = gen_synthetic_inputs(&sh, 0.35, 3, 8).unwrap();
        assert_eq!(t.nonzeros(), 350);
        assert!(t.data.iter().all(|&v| (0..=127).contains(&v)));
        assert_eq!(gen_synthetic_inputs(&sh, 1.0, 3, 8).unwrap().nonzeros(), 1000);
        assert_eq!(gen_synthetic_inputs(&sh, 1e-6, 3, 8).unwrap().nonzeros(), 0);
    }

    #[test]
    fn import_counts_unique_weights() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let t = QuantTensor::new(vec![6], vec![-1, 0, 1, 1, 0, -1], 8).unwrap();
        t.save(&p).unwrap();
        let imp = import_quantized(&p, Some(2)).unwrap();
        assert_eq!(imp.codebook.values(), &[-1, 1, 0]);
        assert!(imp.exceeds_ceiling);
        let t = QuantTensor::new(vec![17], (-8..=8).collect(), 8).unwrap();
        t.save(&p).unwrap();
        assert_eq!(import_quantized(&p, None).unwrap().codebook.len(), 17);
        QuantTensor::new(vec![4], vec![5; 4], 8).unwrap().save(&p).unwrap();
        assert_eq!(import_quantized(&p, None).unwrap().codebook.len(), 1);
        std::fs::write(&p, b"junk").unwrap();
        assert!(import_quantized(&p, None).is_err());
    }
}
