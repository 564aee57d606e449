use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{forward, ModelSpec};

pub const DEFAULT_BINS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Histogram {
    pub bin_count: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; the last bin is closed.
    pub fn build(sorted: &[f64], bin_count: usize) -> Histogram {
        let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
            return Histogram {
                bin_count: 0,
                lo: 0.0,
                hi: 0.0,
                counts: Vec::new(),
            };
        };
        let bin_count = bin_count.max(1);
        let mut hist = Histogram {
            bin_count,
            lo,
            hi,
            counts: vec![0; bin_count],
        };
        let edges = hist.edges();
        let inner = &edges[1..bin_count];
        for &x in sorted {
            hist.counts[inner.partition_point(|&e| e <= x)] += 1;
        }
        hist
    }

    /// `bin_count + 1` edges, the last pinned to `hi`.
    pub fn edges(&self) -> Vec<f64> {
        if self.bin_count == 0 {
            return Vec::new();
        }
        let width = self.hi - self.lo;
        let mut edges: Vec<f64> = (0..=self.bin_count)
            .map(|i| self.lo + width * (i as f64 / self.bin_count as f64))
            .collect();
        edges[self.bin_count] = self.hi;
        edges
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Distribution summary of every scalar a layer produced over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayerStats {
    pub layer_name: String,
    pub count: u64,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl LayerStats {
    /// Summarise observations. Sorting first makes the result independent of
    /// the order observations arrive in.
    pub fn from_observations(layer_name: impl Into<String>, observations: &mut [f64], bins: usize) -> LayerStats {
        observations.sort_unstable_by(f64::total_cmp);
        Self::from_sorted(layer_name, observations, bins)
    }

    pub fn from_sorted(layer_name: impl Into<String>, sorted: &[f64], bins: usize) -> LayerStats {
        let layer_name = layer_name.into();
        let n = sorted.len();
        if n == 0 {
            return LayerStats {
                layer_name,
                count: 0,
                mean: 0.0,
                stddev: 0.0,
                min: 0.0,
                max: 0.0,
                histogram: Histogram::build(sorted, bins),
            };
        }
        let mean = compensated_sum(sorted.iter().copied()) / n as f64;
        let var = compensated_sum(sorted.iter().map(|x| (x - mean) * (x - mean))) / n as f64;
        LayerStats {
            layer_name,
            count: n as u64,
            mean,
            stddev: var.sqrt(),
            min: sorted[0],
            max: sorted[n - 1],
            histogram: Histogram::build(sorted, bins),
        }
    }
}

/// Per-element mean and population standard deviation across images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ElementStats {
    pub layer_name: String,
    pub images: usize,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

/// Everything the profiling pass learns about one layer.
#[derive(Debug, Clone)]
pub struct LayerProfile {
    pub stats: LayerStats,
    /// All observations, ascending.
    pub observations: Vec<f64>,
    pub elements: ElementStats,
}

impl LayerProfile {
    /// Observations inside `[lo, hi]`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        count_in_sorted(&self.observations, lo, hi)
    }
}

pub(crate) fn count_in_sorted(sorted: &[f64], lo: f64, hi: f64) -> usize {
    if !(lo <= hi) {
        return 0;
    }
    let start = sorted.partition_point(|&x| x < lo);
    let end = sorted.partition_point(|&x| x <= hi);
    end - start
}

/// Collect the named layer's output on every image.
///
/// Forward passes run in parallel; results are gathered in dataset order.
pub fn collect_taps(model: &ModelSpec, images: &Dataset, layer: &str) -> Result<Vec<Vec<f64>>> {
    model.layer_index(layer)?;
    images
        .items
        .par_iter()
        .map(|it| {
            let trace = forward(model, &it.image)?;
            Ok(trace.tap(layer).expect("layer exists").to_f64_vec())
        })
        .collect()
}

pub fn profile_from_taps(layer: &str, taps: &[Vec<f64>], bins: usize) -> LayerProfile {
    let width = taps.first().map_or(0, Vec::len);
    let mut observations: Vec<f64> = taps.iter().flatten().copied().collect();
    let stats = LayerStats::from_observations(layer, &mut observations, bins);
    let images = taps.len();
    let mut means = Vec::with_capacity(width);
    let mut stddevs = Vec::with_capacity(width);
    for j in 0..width {
        let mut column: Vec<f64> = taps.iter().map(|row| row[j]).collect();
        column.sort_unstable_by(f64::total_cmp);
        let mean = compensated_sum(column.iter().copied()) / images as f64;
        let var = compensated_sum(column.iter().map(|x| (x - mean) * (x - mean))) / images as f64;
        means.push(mean);
        stddevs.push(var.sqrt());
    }
    LayerProfile {
        stats,
        observations,
        elements: ElementStats {
            layer_name: layer.to_string(),
            images,
            means,
            stddevs,
        },
    }
}

/// Profile `layer` over every validation image.
pub fn profile_layer(model: &ModelSpec, validation: &Dataset, layer: &str) -> Result<LayerProfile> {
    profile_layer_with_bins(model, validation, layer, DEFAULT_BINS)
}

pub fn profile_layer_with_bins(
    model: &ModelSpec,
    validation: &Dataset,
    layer: &str,
    bins: usize,
) -> Result<LayerProfile> {
    let taps = collect_taps(model, validation, layer)?;
    Ok(profile_from_taps(layer, &taps, bins))
}

/// Write `bin_lo,bin_hi,count` rows. Edges use Rust's shortest round-trip
/// float formatting, so reading them back is exact.
pub fn export_histogram(stats: &LayerStats, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_histogram_csv(stats, file)?;
    Ok(())
}

pub fn write_histogram_csv(stats: &LayerStats, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    let edges = stats.histogram.edges();
    for (i, count) in stats.histogram.counts.iter().enumerate() {
        w.write_record([edges[i].to_string(), edges[i + 1].to_string(), count.to_string()])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
}

pub fn read_histogram_csv(path: impl AsRef<Path>) -> Result<Vec<HistogramRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<HistogramRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_population_stats() {
        let s = LayerStats::from_observations("fc", &mut [1.0, 3.0], 4);
        assert_eq!((s.count, s.mean, s.stddev, s.min, s.max), (2, 2.0, 1.0, 1.0, 3.0));
        assert_eq!(s.histogram.counts, vec![1, 0, 0, 1]);
    }

    #[test]
    fn degenerate_distribution() {
        let s = LayerStats::from_observations("fc", &mut [0.0; 12], DEFAULT_BINS);
        assert_eq!((s.mean, s.stddev), (0.0, 0.0));
        assert_eq!(s.histogram.total(), 12);
    }

    #[test]
    fn histogram_counts_cover_everything() {
        let mut obs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 13.0 - 20.0).collect();
        let s = LayerStats::from_observations("x", &mut obs, DEFAULT_BINS);
        assert_eq!(s.histogram.counts.len(), DEFAULT_BINS);
        assert_eq!(s.histogram.total(), 1000);
        assert_eq!((s.histogram.lo, s.histogram.hi), (s.min, s.max));
        let edges = s.histogram.edges();
        for (i, &c) in s.histogram.counts.iter().enumerate() {
            let last = i + 1 == DEFAULT_BINS;
            let direct = obs
                .iter()
                .filter(|&&x| x >= edges[i] && (x < edges[i + 1] || (last && x <= edges[i + 1])))
                .count() as u64;
            assert_eq!(c, direct, "bin {i}");
        }
    }

    #[test]
    fn empty_stats_export_header_only() {
        let s = LayerStats::from_observations("fc1", &mut [], DEFAULT_BINS);
        let mut buf = Vec::new();
        write_histogram_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bin_lo,bin_hi,count\n");
    }

    #[test]
    fn histogram_csv_round_trip() {
        let mut obs: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 1900.0).collect();
        let s = LayerStats::from_observations("fc1", &mut obs, DEFAULT_BINS);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        export_histogram(&s, &path).unwrap();
        let rows = read_histogram_csv(&path).unwrap();
        assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), s.count);
        let edges = s.histogram.edges();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.bin_lo.to_bits(), edges[i].to_bits());
            assert_eq!(row.bin_hi.to_bits(), edges[i + 1].to_bits());
            assert_eq!(row.count, s.histogram.counts[i]);
        }
    }

    #[test]
    fn count_in_is_inclusive() {
        let sorted = [1.0, 2.0, 2.0, 3.0, 4.0];
        assert_eq!(count_in_sorted(&sorted, 2.0, 3.0), 3);
        assert_eq!(count_in_sorted(&sorted, 4.5, 9.0), 0);
        assert_eq!(count_in_sorted(&sorted, 3.0, 2.0), 0);
    }

    #[test]
    fn json_field_names() {
        let s = LayerStats::from_observations("fc1", &mut [1.0, 2.0], 2);
        let v = serde_json::to_value(&s).unwrap();
        for key in ["layerName", "count", "mean", "stddev", "min", "max", "histogram"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["binCount", "lo", "hi", "counts"] {
            assert!(v["histogram"].get(key).is_some(), "{key}");
        }
    }
}
