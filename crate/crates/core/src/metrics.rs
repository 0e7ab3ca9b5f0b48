//! Confusion matrices, per-class IoU, mean IoU and class area percentages.

use alloc::format;
use alloc::string::String;
use core::fmt::Write;
use core::ops::AddAssign;

use crate::class::{LandCover, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::mask::LabelMask;

/// Pixel counts indexed `[ground_truth][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Pixels whose ground truth is `class`.
    pub fn truth_count(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Pixels predicted as `class`.
    pub fn predicted_count(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Tallies one prediction/ground-truth pair into the matrix.
    pub fn accumulate(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
        if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
            return Err(Error::dim(
                "confusion",
                format!(
                    "prediction is {}x{}, ground truth is {}x{}",
                    pred.width(),
                    pred.height(),
                    gt.width(),
                    gt.height()
                ),
            ));
        }
        for (&p, &g) in pred.classes().iter().zip(gt.classes()) {
            self.counts[g as usize][p as usize] += 1;
        }
        Ok(())
    }

    /// Intersection and union pixel counts for one class.
    pub fn intersection_union(&self, class: usize) -> (u64, u64) {
        let inter = self.counts[class][class];
        (inter, self.truth_count(class) + self.predicted_count(class) - inter)
    }

    /// Fraction of pixels on the diagonal; `None` for an empty matrix.
    pub fn pixel_accuracy(&self) -> Option<f64> {
        let total = self.total();
        let correct: u64 = (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum();
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (row, other) in self.counts.iter_mut().zip(rhs.counts) {
            for (a, b) in row.iter_mut().zip(other) {
                *a += b;
            }
        }
    }
}

pub fn confusion(pred: &LabelMask, gt: &LabelMask) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new();
    cm.accumulate(pred, gt)?;
    Ok(cm)
}

/// IoU per class. `None` marks a class absent from both prediction and
/// ground truth, whose IoU is undefined.
pub fn iou_per_class(cm: &ConfusionMatrix) -> [Option<f64>; NUM_CLASSES] {
    core::array::from_fn(|c| {
        let (inter, union) = cm.intersection_union(c);
        (union > 0).then(|| inter as f64 / union as f64)
    })
}

/// Mean over the defined classes only.
pub fn mean_iou(per_class: &[Option<f64>; NUM_CLASSES]) -> Result<f64> {
    mean_iou_excluding(per_class, &[])
}

/// Mean IoU leaving out `excluded` classes (e.g. [`LandCover::Unknown`]).
pub fn mean_iou_excluding(per_class: &[Option<f64>; NUM_CLASSES], excluded: &[LandCover]) -> Result<f64> {
    let (sum, count) = per_class
        .iter()
        .enumerate()
        .filter(|(c, _)| !excluded.iter().any(|e| e.index() == *c))
        .filter_map(|(_, v)| *v)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if count == 0 {
        return Err(Error::EmptyEvaluation(
            "every class is absent from both prediction and ground truth".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Pixel counts per class; fractions are exact rationals `count / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassPercentages {
    counts: [u64; NUM_CLASSES],
    total: u64,
}

impl ClassPercentages {
    pub fn from_counts(counts: [u64; NUM_CLASSES]) -> Result<Self> {
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::Parameter("class percentages of an empty mask".into()));
        }
        Ok(ClassPercentages { counts, total })
    }

    pub fn counts(&self) -> &[u64; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn fraction(&self, class: LandCover) -> f64 {
        self.counts[class.index()] as f64 / self.total as f64
    }

    pub fn fractions(&self) -> [f64; NUM_CLASSES] {
        core::array::from_fn(|c| self.counts[c] as f64 / self.total as f64)
    }

    /// Percentage in tenths of a point, rounded half up (528 for 52.8%).
    pub fn percent_tenths(&self, class: LandCover) -> i64 {
        round_ratio(self.counts[class.index()] as i128 * 1000, self.total as i128)
    }
}

pub fn class_percentages(mask: &LabelMask) -> Result<ClassPercentages> {
    if mask.is_empty() {
        return Err(Error::Parameter("class percentages of an empty mask".into()));
    }
    let mut counts = [0u64; NUM_CLASSES];
    for &c in mask.classes() {
        counts[c as usize] += 1;
    }
    ClassPercentages::from_counts(counts)
}

/// `num / den` rounded to the nearest integer, halves away from zero.
pub(crate) fn round_ratio(num: i128, den: i128) -> i64 {
    debug_assert!(den > 0);
    let q = (2 * num.abs() + den) / (2 * den);
    (if num < 0 { -q } else { q }) as i64
}

/// `528` → `"52.8"`, `-466` → `"-46.6"`.
pub fn format_tenths(tenths: i64) -> String {
    let sign = if tenths < 0 { "-" } else { "" };
    let a = tenths.unsigned_abs();
    format!("{sign}{}.{}", a / 10, a % 10)
}

/// `class,iou` rows; undefined classes have an empty value.
pub fn iou_csv(per_class: &[Option<f64>; NUM_CLASSES]) -> String {
    let mut s = String::from("class,iou\n");
    for (c, v) in LandCover::ALL.iter().zip(per_class) {
        match v {
            Some(v) => {
                let _ = writeln!(s, "{},{v:.6}", c.key());
            }
            None => {
                let _ = writeln!(s, "{},", c.key());
            }
        }
    }
    s
}

/// `class,percent` rows at one decimal place.
pub fn percent_csv(p: &ClassPercentages) -> String {
    let mut s = String::from("class,percent\n");
    for c in LandCover::ALL {
        let _ = writeln!(s, "{},{}", c.key(), format_tenths(p.percent_tenths(c)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mask(w: usize, h: usize, v: &[u8]) -> LabelMask {
        LabelMask::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn hand_tally() {
        let gt = mask(2, 2, &[0, 0, 1, 1]);
        let pred = mask(2, 2, &[0, 1, 1, 1]);
        let cm = confusion(&pred, &gt).unwrap();
        assert_eq!(cm.get(0, 0), 1);
        assert_eq!(cm.get(0, 1), 1);
        assert_eq!(cm.get(1, 1), 2);
        assert_eq!(cm.total(), 4);
        let perfect = confusion(&gt, &gt).unwrap();
        for g in 0..NUM_CLASSES {
            for p in 0..NUM_CLASSES {
                if g != p {
                    assert_eq!(perfect.get(g, p), 0);
                }
            }
        }
    }

    #[test]
    fn half_and_half() {
        // prediction says class 0 everywhere, truth is half 0 half 1
        let cm = confusion(&mask(2, 2, &[0, 0, 0, 0]), &mask(2, 2, &[0, 0, 1, 1])).unwrap();
        let iou = iou_per_class(&cm);
        assert_eq!(iou[0], Some(0.5));
        assert_eq!(iou[1], Some(0.0));
        assert_eq!(iou[2], None);
    }

    #[test]
    fn mean_skips_undefined() {
        let v = [Some(1.0), Some(0.5), None, None, None, None, None];
        assert_eq!(mean_iou(&v).unwrap(), 0.75);
        assert_eq!(mean_iou(&[Some(0.3); 7]).unwrap(), 0.3);
        assert!(matches!(mean_iou(&[None; 7]), Err(Error::EmptyEvaluation(_))));
        let with_unknown = [Some(1.0), None, None, None, None, None, Some(0.0)];
        assert_eq!(mean_iou(&with_unknown).unwrap(), 0.5);
        assert_eq!(mean_iou_excluding(&with_unknown, &[LandCover::Unknown]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(confusion(&mask(2, 1, &[0, 0]), &mask(1, 2, &[0, 0])).is_err());
    }

    #[test]
    fn percentages() {
        let forest = LabelMask::filled(10, 10, LandCover::Forest);
        let p = class_percentages(&forest).unwrap();
        assert_eq!(p.fraction(LandCover::Forest), 1.0);
        assert_eq!(p.percent_tenths(LandCover::Urban), 0);

        let mut v = vec![LandCover::Agriculture as u8; 528];
        v.extend(vec![LandCover::Urban as u8; 472]);
        let p = class_percentages(&mask(1000, 1, &v)).unwrap();
        assert_eq!(p.percent_tenths(LandCover::Agriculture), 528);
        assert_eq!(p.percent_tenths(LandCover::Urban), 472);
        assert!(percent_csv(&p).contains("agriculture,52.8\n"));
        assert!(class_percentages(&mask(0, 0, &[])).is_err());
    }

    #[test]
    fn rounding() {
        assert_eq!(round_ratio(5, 10), 1);
        assert_eq!(round_ratio(-5, 10), -1);
        assert_eq!(round_ratio(4, 10), 0);
        assert_eq!(format_tenths(-466), "-46.6");
        assert_eq!(format_tenths(0), "0.0");
        assert_eq!(format_tenths(1000), "100.0");
    }
}
