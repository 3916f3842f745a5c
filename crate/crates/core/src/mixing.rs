//! Training windows: sampling, channel alignment, and progressive mixing of
//! three sources.
//!
//! Window positions drawn by [`sample_windows`] follow a fixed rule so other
//! readers of the binary format can reproduce them from the seed alone:
//!
//! ```text
//! h      = derive_seed(seed, [k])          // k = window number
//! sample = h % samples
//! offset = mix(h) % (length - context - horizon + 1)
//! ```
//!
//! with `derive_seed` and `mix` as defined in [`crate::rng`].

use ndarray::{concatenate, Array2, Array3, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::SeriesTensor;
use crate::rng::{derive_seed, mix};

/// `min(1, ln(1 + 2 i / m))`.
pub fn p_mix(i: usize, m: usize) -> f64 {
    p_mix_raw(i, m).min(1.0)
}

fn p_mix_raw(i: usize, m: usize) -> f64 {
    libm::log(1.0 + 2.0 * i as f64 / m.max(1) as f64)
}

/// Progressive mixing schedule over `len` training indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSchedule {
    pub len: usize,
    pub clamp: bool,
}

impl MixSchedule {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("mix schedule length must be at least 1"));
        }
        Ok(Self { len, clamp: true })
    }

    /// Mixing probability at index `i`; unclamped values above one are only
    /// reported, they behave like one when sampling.
    pub fn probability(&self, i: usize) -> f64 {
        if self.clamp {
            p_mix(i, self.len)
        } else {
            p_mix_raw(i, self.len)
        }
    }

    /// First index at which mixing is certain.
    pub fn saturation_index(&self) -> usize {
        (self.len as f64 * (std::f64::consts::E - 1.0) / 2.0).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowLengths {
    pub context: usize,
    pub horizon: usize,
}

impl WindowLengths {
    pub fn new(context: usize, horizon: usize) -> Self {
        Self { context, horizon }
    }

    pub fn total(&self) -> usize {
        self.context + self.horizon
    }

    fn check(&self, len: usize) -> Result<usize> {
        if self.context == 0 || self.horizon == 0 {
            return Err(Error::invalid("context and horizon must both be positive"));
        }
        if self.total() > len {
            return Err(Error::invalid(format!(
                "window of {} + {} steps exceeds series length {len}",
                self.context, self.horizon
            )));
        }
        Ok(len - self.total())
    }
}

/// Where one block of channels in a window came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub source: usize,
    pub sample: usize,
    pub offset: usize,
}

/// Context `X` and target `Y`, both channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub context: Array2<f64>,
    pub target: Array2<f64>,
    pub origins: Vec<WindowOrigin>,
}

impl WindowPair {
    pub fn channels(&self) -> usize {
        self.context.nrows()
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self {
            context: self.context.select(Axis(0), rows),
            target: self.target.select(Axis(0), rows),
            origins: self.origins.clone(),
        }
    }

    pub fn with_source(mut self, source: usize) -> Self {
        self.origins.iter_mut().for_each(|o| o.source = source);
        self
    }

    /// Context followed by target along time.
    pub fn joined(&self) -> Array2<f64> {
        concatenate(Axis(1), &[self.context.view(), self.target.view()]).expect("matching channel counts")
    }
}

fn cut(sample: ArrayView2<f64>, offset: usize, lens: WindowLengths) -> (Array2<f64>, Array2<f64>) {
    let context = sample.slice(ndarray::s![.., offset..offset + lens.context]).to_owned();
    let target = sample
        .slice(ndarray::s![.., offset + lens.context..offset + lens.total()])
        .to_owned();
    (context, target)
}

/// `(sample, offset)` of window `k` under the documented index rule.
pub fn window_index(seed: u64, k: usize, samples: usize, len: usize, lens: WindowLengths) -> Result<(usize, usize)> {
    let span = lens.check(len)? as u64 + 1;
    if samples == 0 {
        return Err(Error::invalid("cannot sample windows from an empty dataset"));
    }
    let h = derive_seed(seed, &[k as u64]);
    Ok(((h % samples as u64) as usize, (mix(h) % span) as usize))
}

/// `n` windows, each from a uniformly chosen sample and start offset.
pub fn sample_windows(source: &SeriesTensor, n: usize, lens: WindowLengths, seed: u64) -> Result<Vec<WindowPair>> {
    lens.check(source.len())?;
    (0..n)
        .map(|k| {
            let (sample, offset) = window_index(seed, k, source.samples(), source.len(), lens)?;
            let (context, target) = cut(source.sample(sample), offset, lens);
            Ok(WindowPair {
                context,
                target,
                origins: vec![WindowOrigin {
                    source: 0,
                    sample,
                    offset,
                }],
            })
        })
        .collect()
}

/// Brings a window to `target` channels: a uniform subset (original order)
/// when there are too many, the originals followed by uniform resamples when
/// there are too few.
pub fn align_channels<R: Rng + ?Sized>(pair: &WindowPair, target: usize, rng: &mut R) -> Result<WindowPair> {
    let have = pair.channels();
    if have == 0 {
        return Err(Error::invalid("cannot align a window without channels"));
    }
    if target == 0 {
        return Err(Error::invalid("target channel count must be at least 1"));
    }
    if have == target {
        return Ok(pair.clone());
    }
    let rows: Vec<usize> = if have > target {
        let mut keep = index::sample(rng, have, target).into_vec();
        keep.sort_unstable();
        keep
    } else {
        (0..have).chain((have..target).map(|_| rng.random_range(0..have))).collect()
    };
    Ok(pair.select(&rows))
}

/// Item `i` of a source for the progressive mixer: sample `i mod S` at a
/// uniform offset.
fn item<R: Rng + ?Sized>(source: &SeriesTensor, id: usize, i: usize, lens: WindowLengths, rng: &mut R) -> Result<WindowPair> {
    let span = lens.check(source.len())?;
    if source.samples() == 0 {
        return Err(Error::invalid(format!("source {id} is empty")));
    }
    let sample = i % source.samples();
    let offset = rng.random_range(0..=span);
    let (context, target) = cut(source.sample(sample), offset, lens);
    Ok(WindowPair {
        context,
        target,
        origins: vec![WindowOrigin {
            source: id,
            sample,
            offset,
        }],
    })
}

/// Uniform composition of `total` into three positive parts.
fn split_three<R: Rng + ?Sized>(total: usize, rng: &mut R) -> [usize; 3] {
    let mut cuts = index::sample(rng, total - 1, 2).into_vec();
    cuts.sort_unstable();
    let (a, b) = (cuts[0] + 1, cuts[1] + 1);
    [a, b - a, total - b]
}

/// Training item `i`: with probability `p_mix(i)`, channel subsets of one
/// window from each source concatenated and permuted; otherwise a window
/// from one uniformly chosen source. Output always has `budget` channels.
pub fn mix_sample<R: Rng + ?Sized>(
    i: usize,
    schedule: &MixSchedule,
    sources: [&SeriesTensor; 3],
    lens: WindowLengths,
    budget: usize,
    rng: &mut R,
) -> Result<WindowPair> {
    if budget == 0 {
        return Err(Error::invalid("channel budget must be at least 1"));
    }
    let mixed = rng.random::<f64>() < schedule.probability(i);
    if !mixed || budget < 3 {
        let k = rng.random_range(0..3);
        let window = item(sources[k], k, i, lens, rng)?;
        return align_channels(&window, budget, rng);
    }
    let parts = split_three(budget, rng);
    let mut blocks = Vec::with_capacity(3);
    for (k, (source, part)) in sources.iter().zip(parts).enumerate() {
        let window = item(source, k, i, lens, rng)?;
        blocks.push(align_channels(&window, part, rng)?);
    }
    let contexts: Vec<_> = blocks.iter().map(|b| b.context.view()).collect();
    let targets: Vec<_> = blocks.iter().map(|b| b.target.view()).collect();
    let joined = WindowPair {
        context: concatenate(Axis(0), &contexts).expect("equal window lengths"),
        target: concatenate(Axis(0), &targets).expect("equal window lengths"),
        origins: blocks.iter().flat_map(|b| b.origins.clone()).collect(),
    };
    let mut order: Vec<usize> = (0..budget).collect();
    order.shuffle(rng);
    Ok(joined.select(&order))
}

/// `n_val` validation windows aligned to `channels`.
pub fn subsample_validation<R: Rng + ?Sized>(
    val: &SeriesTensor,
    n_val: usize,
    lens: WindowLengths,
    channels: usize,
    rng: &mut R,
) -> Result<Vec<WindowPair>> {
    let seed = rng.next_u64();
    sample_windows(val, n_val, lens, seed)?
        .iter()
        .map(|w| align_channels(w, channels, rng))
        .collect()
}

/// Stacks equally shaped windows into a dataset with context and target
/// joined along time.
pub fn windows_to_tensor(windows: &[WindowPair]) -> Result<SeriesTensor> {
    let first = windows.first().ok_or_else(|| Error::invalid("no windows to stack"))?;
    let (n, len) = (first.channels(), first.context.ncols() + first.target.ncols());
    let mut data = Array3::zeros((windows.len(), n, len));
    for (k, w) in windows.iter().enumerate() {
        if w.channels() != n || w.context.ncols() + w.target.ncols() != len {
            return Err(Error::invalid(format!("window {k} differs in shape from the first")));
        }
        data.index_axis_mut(Axis(0), k).assign(&w.joined());
    }
    Ok(SeriesTensor::new(data))
}
