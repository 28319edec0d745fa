//! Sequence representations built from a shared library of small predictors:
//! greedy unsupervised segmentation of a curvature sequence into regions each
//! served by one network, windowed labeling, histograms of networks and
//! strings of networks compared by (cyclically shifted) edit distance.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::{train, PredictorSpec, Sample, TrainConfig, TrainedPredictor};

pub type NetId = usize;

/// Autoregressive predictors of a common order, addressed by insertion index.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkLibrary {
    order: usize,
    nets: Vec<TrainedPredictor>,
}

impl NetworkLibrary {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("autoregressive order must be >= 1".into()));
        }
        Ok(Self { order, nets: Vec::new() })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn get(&self, id: NetId) -> Option<&TrainedPredictor> {
        self.nets.get(id)
    }

    pub fn add(&mut self, net: TrainedPredictor) -> Result<NetId> {
        if net.spec.input_dim != self.order || net.spec.output_dim != 1 {
            return Err(Error::Dimension {
                expected: self.order,
                got: net.spec.input_dim,
                context: "library network order",
            });
        }
        self.nets.push(net);
        Ok(self.nets.len() - 1)
    }

    /// Writes `net_<id>.pred` files and a `manifest.txt` listing them.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = format!("order {}\n", self.order);
        for (id, net) in self.nets.iter().enumerate() {
            let name = format!("net_{id}.pred");
            let path = dir.join(&name);
            std::fs::write(&path, net.to_text()).map_err(|e| Error::io(&path, e))?;
            manifest.push_str(&format!("{id} {name}\n"));
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let order = lines
            .next()
            .and_then(|l| l.strip_prefix("order "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::parse("library manifest", "first line must be `order <M>`"))?;
        let mut lib = Self::new(order)?;
        for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let (id, name) =
                line.split_once(' ').ok_or_else(|| Error::parse("library manifest", format!("bad line `{line}`")))?;
            if id.parse::<usize>().ok() != Some(k) {
                return Err(Error::parse("library manifest", format!("ids must be 0..n in order, found `{id}`")));
            }
            let p = dir.join(name.trim());
            let net = TrainedPredictor::from_text(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?;
            lib.add(net)?;
        }
        Ok(lib)
    }
}

/// One-step prediction problem over a sequence. Cyclic sequences wrap their
/// inputs so every position is a target; open ones start at `order`.
struct Targets<'a> {
    seq: &'a [f64],
    cyclic: bool,
    order: usize,
}

impl Targets<'_> {
    fn positions(&self) -> std::ops::Range<usize> {
        if self.cyclic {
            0..self.seq.len()
        } else {
            self.order.min(self.seq.len())..self.seq.len()
        }
    }

    fn input(&self, t: usize, buf: &mut Vec<f64>) {
        let n = self.seq.len();
        buf.clear();
        buf.extend((1..=self.order).rev().map(|k| self.seq[(t + n * self.order - k) % n]));
    }

    fn samples(&self, range: std::ops::Range<usize>) -> Vec<Sample> {
        let mut buf = Vec::new();
        range
            .map(|t| {
                self.input(t, &mut buf);
                Sample::new(buf.clone(), vec![self.seq[t]])
            })
            .collect()
    }

    /// Absolute one-step errors of `net` over `range`.
    fn errors(&self, net: &TrainedPredictor, range: std::ops::Range<usize>) -> Result<Vec<f64>> {
        let mut buf = Vec::new();
        let mut out = [0.0];
        range
            .map(|t| {
                self.input(t, &mut buf);
                net.predict_into(&buf, &mut out)?;
                Ok((self.seq[t] - out[0]).abs())
            })
            .collect()
    }

    fn mean_error(&self, net: &TrainedPredictor, range: std::ops::Range<usize>) -> Result<f64> {
        let e = self.errors(net, range)?;
        Ok(e.iter().sum::<f64>() / e.len().max(1) as f64)
    }

    fn best(&self, lib: &NetworkLibrary, range: std::ops::Range<usize>) -> Result<Option<(NetId, f64)>> {
        let mut best: Option<(NetId, f64)> = None;
        for (id, net) in lib.nets.iter().enumerate() {
            let e = self.mean_error(net, range.clone())?;
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((id, e));
            }
        }
        Ok(best)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Mean absolute one-step error a network may have over a region.
    pub error_threshold: f64,
    pub min_segment_len: usize,
    pub order: usize,
    pub hidden_units: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            error_threshold: 0.004,
            min_segment_len: 12,
            order: 3,
            hidden_units: 0,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.error_threshold > 0.0) {
            return Err(Error::Config("error_threshold must be > 0".into()));
        }
        if self.min_segment_len <= self.order {
            return Err(Error::Config("min_segment_len must exceed the autoregressive order".into()));
        }
        self.train.validate()
    }

    fn spec(&self, seed: u64) -> PredictorSpec {
        if self.hidden_units == 0 {
            PredictorSpec { seed, ..PredictorSpec::linear(self.order, 1) }
        } else {
            PredictorSpec::mlp(self.order, 1, self.hidden_units, seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkString {
    pub symbols: Vec<NetId>,
    pub cyclic: bool,
}

impl NetworkString {
    /// Collapses runs of equal symbols (and, when cyclic, a run that wraps
    /// from the end to the start).
    pub fn collapsed(symbols: &[NetId], cyclic: bool) -> Self {
        let mut s: Vec<NetId> = Vec::with_capacity(symbols.len());
        for &x in symbols {
            if s.last() != Some(&x) {
                s.push(x);
            }
        }
        if cyclic && s.len() > 1 && s.first() == s.last() {
            s.pop();
        }
        Self { symbols: s, cyclic }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Target positions `start..end`.
    pub start: usize,
    pub end: usize,
    pub net: NetId,
    /// A short remainder at the end of the sequence was absorbed here.
    pub absorbed_tail: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub string: NetworkString,
    pub new_networks: usize,
}

/// Greedy online segmentation. A region opens with `min_segment_len`
/// targets served by the best library network (or a network trained on them
/// when none is within threshold) and grows while the mean error over the
/// trailing `min_segment_len` targets stays within threshold. On a breach the
/// region closes before the first target that exceeded the threshold and is
/// assigned an existing network if one fits it, else a new network trained on
/// the whole region. A remainder shorter than `min_segment_len` joins the
/// previous region.
pub fn segment_and_train(
    seq: &[f64],
    cyclic: bool,
    cfg: &SegmentationConfig,
    lib: &mut NetworkLibrary,
) -> Result<Segmentation> {
    cfg.validate()?;
    if lib.order != cfg.order {
        return Err(Error::Config(format!(
            "library order {} differs from segmentation order {}",
            lib.order, cfg.order
        )));
    }
    if seq.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sequence"));
    }
    let tg = Targets { seq, cyclic, order: cfg.order };
    let all = tg.positions();
    let w = cfg.min_segment_len;
    if all.len() < w {
        return Err(Error::TooShort { needed: w + if cyclic { 0 } else { cfg.order }, got: seq.len() });
    }
    let before = lib.len();
    let mut regions: Vec<(usize, usize, bool)> = Vec::new();
    let mut start = all.start;
    while start < all.end {
        if all.end - start < w {
            let last = regions.last_mut().expect("first region always has w targets");
            last.1 = all.end;
            last.2 = true;
            break;
        }
        let open = start..start + w;
        let grower = match tg.best(lib, open.clone())? {
            Some((id, e)) if e <= cfg.error_threshold => lib.nets[id].clone(),
            _ => train(&tg.samples(open.clone()), &cfg.spec(cfg.seed.wrapping_add(lib.len() as u64)), &cfg.train)?,
        };
        let mut errs = tg.errors(&grower, open)?;
        let mut sum: f64 = errs.iter().sum();
        let mut end = start + w;
        while end < all.end {
            let e = tg.errors(&grower, end..end + 1)?[0];
            errs.push(e);
            sum += e - errs[errs.len() - 1 - w];
            if sum / w as f64 > cfg.error_threshold {
                let tail = &errs[errs.len() - w..];
                let first_bad = tail.iter().position(|v| *v > cfg.error_threshold).unwrap_or(w - 1);
                let cut = end + 1 - w + first_bad;
                end = cut.max(start + w);
                break;
            }
            end += 1;
        }
        regions.push((start, end, false));
        start = end;
    }

    let mut segments = Vec::with_capacity(regions.len());
    for (start, end, absorbed) in regions {
        let net = match tg.best(lib, start..end)? {
            Some((id, e)) if e <= cfg.error_threshold => id,
            _ => {
                let seed = cfg.seed.wrapping_add(lib.len() as u64);
                lib.add(train(&tg.samples(start..end), &cfg.spec(seed), &cfg.train)?)?
            }
        };
        segments.push(Segment { start, end, net, absorbed_tail: absorbed });
    }
    let ids: Vec<NetId> = segments.iter().map(|s| s.net).collect();
    Ok(Segmentation { string: NetworkString::collapsed(&ids, cyclic), segments, new_networks: lib.len() - before })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labeling {
    /// Winner and its mean error for each window.
    pub windows: Vec<(NetId, f64)>,
    pub string: NetworkString,
    /// Mean winner error exceeded the threshold.
    pub low_confidence: bool,
}

impl Labeling {
    pub fn histogram(&self) -> NetworkHistogram {
        NetworkHistogram::from_symbols(self.windows.iter().map(|w| w.0))
    }
}

/// Assigns each block of `window` consecutive targets (stride `window`,
/// starting at target `offset`) to the library network with the smallest
/// mean error there.
pub fn label_sequence(
    seq: &[f64],
    cyclic: bool,
    lib: &NetworkLibrary,
    window: usize,
    threshold: f64,
) -> Result<Labeling> {
    label_sequence_from(seq, cyclic, lib, window, threshold, 0)
}

/// As [`label_sequence`] with the first window starting `offset` targets in
/// (cyclic sequences wrap round).
pub fn label_sequence_from(
    seq: &[f64],
    cyclic: bool,
    lib: &NetworkLibrary,
    window: usize,
    threshold: f64,
    offset: usize,
) -> Result<Labeling> {
    if lib.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if window == 0 {
        return Err(Error::Config("label window must be >= 1".into()));
    }
    let tg = Targets { seq, cyclic, order: lib.order };
    let all = tg.positions();
    if all.len() < window {
        return Err(Error::TooShort { needed: window, got: all.len() });
    }
    let n_windows = if cyclic { all.len() / window } else { (all.len() - offset.min(all.len())) / window };
    if n_windows == 0 {
        return Err(Error::TooShort { needed: window + offset, got: all.len() });
    }
    // per-network error at every target, computed once
    let n = all.len();
    let table: Vec<Vec<f64>> = lib.nets.iter().map(|net| tg.errors(net, all.clone())).collect::<Result<_>>()?;
    let windows: Vec<(NetId, f64)> = (0..n_windows)
        .map(|k| {
            let idx = |t: usize| (offset + k * window + t) % n;
            table
                .iter()
                .enumerate()
                .map(|(id, e)| (id, (0..window).map(|t| e[idx(t)]).sum::<f64>() / window as f64))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap()
        })
        .collect();
    let mean = windows.iter().map(|w| w.1).sum::<f64>() / windows.len() as f64;
    let ids: Vec<NetId> = windows.iter().map(|w| w.0).collect();
    Ok(Labeling { string: NetworkString::collapsed(&ids, cyclic), low_confidence: mean > threshold, windows })
}

/// Normalized frequencies of network ids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkHistogram {
    pub counts: BTreeMap<NetId, usize>,
    pub freqs: BTreeMap<NetId, f64>,
}

impl NetworkHistogram {
    pub fn from_symbols(symbols: impl IntoIterator<Item = NetId>) -> Self {
        let mut counts = BTreeMap::new();
        for s in symbols {
            *counts.entry(s).or_insert(0usize) += 1;
        }
        let total: usize = counts.values().sum();
        let freqs = counts.iter().map(|(k, c)| (*k, *c as f64 / total as f64)).collect();
        Self { counts, freqs }
    }

    pub fn freq(&self, id: NetId) -> f64 {
        self.freqs.get(&id).copied().unwrap_or(0.0)
    }

    /// Bin-wise mean of the frequencies; counts are summed.
    pub fn mean(hists: &[NetworkHistogram]) -> Result<Self> {
        if hists.is_empty() {
            return Err(Error::Config("mean of zero histograms".into()));
        }
        let mut counts = BTreeMap::new();
        let mut freqs = BTreeMap::new();
        for h in hists {
            for (k, c) in &h.counts {
                *counts.entry(*k).or_insert(0) += c;
            }
            for (k, f) in &h.freqs {
                *freqs.entry(*k).or_insert(0.0) += f / hists.len() as f64;
            }
        }
        Ok(Self { counts, freqs })
    }

    /// `id,count,freq` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,count,freq\n");
        for (k, f) in &self.freqs {
            s.push_str(&format!("{k},{},{f}\n", self.counts.get(k).copied().unwrap_or(0)));
        }
        s
    }
}

/// L1 distance between frequency vectors (0 to 2).
pub fn histogram_distance(a: &NetworkHistogram, b: &NetworkHistogram) -> f64 {
    let mut d = 0.0;
    for (k, f) in &a.freqs {
        d += (f - b.freq(*k)).abs();
    }
    for (k, f) in &b.freqs {
        if !a.freqs.contains_key(k) {
            d += f.abs();
        }
    }
    d
}

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Smallest edit distance between `a` and any rotation of `b`.
pub fn shift_min_levenshtein<T: PartialEq + Clone>(a: &[T], b: &[T]) -> usize {
    if b.is_empty() {
        return a.len();
    }
    let mut rot = b.to_vec();
    let mut best = usize::MAX;
    for _ in 0..b.len() {
        best = best.min(levenshtein(a, &rot));
        if best == 0 {
            break;
        }
        rot.rotate_left(1);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> SegmentationConfig {
        SegmentationConfig { error_threshold: 1e-3, min_segment_len: 10, order: 3, ..Default::default() }
    }

    #[test]
    fn constant_sequence_one_segment() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        let seq = vec![0.05; 120];
        let s = segment_and_train(&seq, true, &cfg(), &mut lib).unwrap();
        assert_eq!(s.string.symbols, vec![0]);
        assert_eq!(lib.len(), 1);
    }

    fn two_circles() -> Vec<f64> {
        let mut v = vec![0.1; 100];
        v.extend(vec![0.05; 100]);
        v
    }

    #[test]
    fn step_gives_two_segments_and_reuse_is_idempotent() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        let seq = two_circles();
        let s = segment_and_train(&seq, false, &cfg(), &mut lib).unwrap();
        assert_eq!(s.string.symbols.len(), 2);
        assert_ne!(s.string.symbols[0], s.string.symbols[1]);
        assert_eq!(lib.len(), 2);
        let again = segment_and_train(&seq, false, &cfg(), &mut lib).unwrap();
        assert_eq!(again.string, s.string);
        assert_eq!(again.new_networks, 0);
        // labeling the training sequence reproduces the string
        let l = label_sequence(&seq, false, &lib, 10, 1e-3).unwrap();
        assert_eq!(l.string.symbols, s.string.symbols);
        assert!(!l.low_confidence);
    }

    #[test]
    fn cyclic_wrap_merges_ends() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        let mut seq = vec![0.1; 50];
        seq.extend(vec![0.05; 100]);
        seq.extend(vec![0.1; 50]);
        let s = segment_and_train(&seq, true, &cfg(), &mut lib).unwrap();
        assert_eq!(s.string.symbols.len(), 2, "{:?}", s.segments);
    }

    #[test]
    fn short_tail_absorbed() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        let mut seq = vec![0.1; 100];
        seq.extend(vec![0.3; 5]);
        let s = segment_and_train(&seq, false, &cfg(), &mut lib).unwrap();
        assert!(s.segments.last().unwrap().absorbed_tail);
        assert_eq!(s.segments.last().unwrap().end, seq.len());
    }

    #[test]
    fn segmentation_errors() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        assert!(matches!(segment_and_train(&[0.1; 5], true, &cfg(), &mut lib), Err(Error::TooShort { .. })));
        let bad = SegmentationConfig { min_segment_len: 3, ..cfg() };
        assert!(segment_and_train(&[0.1; 50], true, &bad, &mut lib).is_err());
        assert!(matches!(label_sequence(&[0.1; 50], true, &lib, 10, 1.0), Err(Error::EmptyLibrary)));
    }

    #[test]
    fn deterministic_with_mlp() {
        let seq: Vec<f64> =
            (0..160).map(|k| 0.05 + 0.02 * (k as f64 * 0.2).sin() + if k > 80 { 0.05 } else { 0.0 }).collect();
        let c = SegmentationConfig {
            hidden_units: 4,
            error_threshold: 5e-3,
            min_segment_len: 16,
            train: TrainConfig { epochs: 100, ..TrainConfig::default() },
            ..cfg()
        };
        let run = || {
            let mut lib = NetworkLibrary::new(3).unwrap();
            let s = segment_and_train(&seq, false, &c, &mut lib).unwrap();
            (lib, s.string)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn labeling_noise_is_total() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        segment_and_train(&two_circles(), false, &cfg(), &mut lib).unwrap();
        let noise: Vec<f64> = (0..97).map(|k| ((k * 7919) % 113) as f64 / 113.0).collect();
        let l = label_sequence(&noise, true, &lib, 10, 1e-3).unwrap();
        assert!(l.low_confidence);
        assert_eq!(l.windows.len(), 9);
        assert!(matches!(label_sequence(&noise[..5], true, &lib, 10, 1e-3), Err(Error::TooShort { .. })));
    }

    #[test]
    fn library_roundtrip() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        segment_and_train(&two_circles(), false, &cfg(), &mut lib).unwrap();
        let dir = std::env::temp_dir().join(format!("premonn-lib-{}", std::process::id()));
        lib.save(&dir).unwrap();
        assert_eq!(NetworkLibrary::load(&dir).unwrap(), lib);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn histogram_examples() {
        let h = NetworkHistogram::from_symbols([0, 0, 1]);
        assert!((h.freq(0) - 2.0 / 3.0).abs() < 1e-15 && (h.freq(1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(NetworkHistogram::mean(&[h.clone(), h.clone()]).unwrap().freqs, h.freqs);
        let m = NetworkHistogram::mean(&[NetworkHistogram::from_symbols([0]), NetworkHistogram::from_symbols([1])])
            .unwrap();
        assert_eq!((m.freq(0), m.freq(1)), (0.5, 0.5));
        assert_eq!(histogram_distance(&h, &h), 0.0);
        let a = NetworkHistogram::from_symbols([0]);
        let b = NetworkHistogram::from_symbols([1]);
        assert_eq!(histogram_distance(&a, &b), 2.0);
        assert_eq!(histogram_distance(&NetworkHistogram::from_symbols([0, 1]), &a), 1.0);
        assert_eq!(a.to_csv(), "id,count,freq\n0,1,1\n");
    }

    #[test]
    fn histogram_invariant_to_window_start_on_tiled_cycle() {
        let mut lib = NetworkLibrary::new(3).unwrap();
        let mut seq = vec![0.1; 60];
        seq.extend(vec![0.05; 40]);
        segment_and_train(&seq, true, &cfg(), &mut lib).unwrap();
        let base = label_sequence(&seq, true, &lib, 10, 1e-3).unwrap();
        for shift in [10, 30, 70] {
            let mut rotated = seq.clone();
            rotated.rotate_left(shift);
            let l = label_sequence(&rotated, true, &lib, 10, 1e-3).unwrap();
            assert_eq!(l.histogram(), base.histogram());
            assert_eq!(shift_min_levenshtein(&base.string.symbols, &l.string.symbols), 0);
        }
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(b"abc", b"abc"), 0);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein::<u8>(b"", b"abcd"), 4);
        assert_eq!(shift_min_levenshtein(b"abc", b"bca"), 0);
        assert_eq!(shift_min_levenshtein(b"ab", b"cd"), 2);
    }

    /// Minimum edit count by breadth-first search over all strings reachable
    /// by single edits over the joint alphabet.
    fn bfs_distance(a: &[u8], b: &[u8]) -> usize {
        use std::collections::{HashSet, VecDeque};
        let mut alphabet: Vec<u8> = a.iter().chain(b).copied().collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        let max_len = a.len().max(b.len());
        let mut seen = HashSet::from([a.to_vec()]);
        let mut queue = VecDeque::from([(a.to_vec(), 0usize)]);
        while let Some((s, d)) = queue.pop_front() {
            if s == b {
                return d;
            }
            let mut next = Vec::new();
            for i in 0..s.len() {
                let mut t = s.clone();
                t.remove(i);
                next.push(t);
                for &c in &alphabet {
                    let mut t = s.clone();
                    t[i] = c;
                    next.push(t);
                }
            }
            if s.len() < max_len {
                for i in 0..=s.len() {
                    for &c in &alphabet {
                        let mut t = s.clone();
                        t.insert(i, c);
                        next.push(t);
                    }
                }
            }
            for t in next {
                if seen.insert(t.clone()) {
                    queue.push_back((t, d + 1));
                }
            }
        }
        unreachable!()
    }

    proptest! {
        #[test]
        fn levenshtein_is_a_metric(
            a in prop::collection::vec(0u8..3, 0..=6),
            b in prop::collection::vec(0u8..3, 0..=6),
            c in prop::collection::vec(0u8..3, 0..=6),
        ) {
            let ab = levenshtein(&a, &b);
            prop_assert_eq!(ab, bfs_distance(&a, &b));
            prop_assert_eq!(ab, levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
            prop_assert_eq!(ab == 0, a == b);
        }

        #[test]
        fn rotation_has_zero_shift_distance(a in prop::collection::vec(0u8..4, 1..=8), k in 0usize..8) {
            let mut r = a.clone();
            r.rotate_left(k % a.len());
            prop_assert_eq!(shift_min_levenshtein(&a, &r), 0);
        }
    }
}
