//! Per-axis RMSE, average Euclidean error and PCK, pooled into the seven joint groups of
//! the evaluation table.

use std::fmt::Write as _;

use crate::decode::{match_to_ground_truth, Skeleton3D};
use crate::error::{Error, Result};
use crate::scene::{Joint, NUM_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointGroup {
    Neck,
    Shoulders,
    Hips,
    Knees,
    Ankles,
    Elbows,
    Wrists,
}

impl JointGroup {
    /// Table row order.
    pub const ALL: [JointGroup; 7] = [
        JointGroup::Neck,
        JointGroup::Shoulders,
        JointGroup::Hips,
        JointGroup::Knees,
        JointGroup::Ankles,
        JointGroup::Elbows,
        JointGroup::Wrists,
    ];

    /// Neck, shoulders and hips.
    pub const CORE: [JointGroup; 3] = [JointGroup::Neck, JointGroup::Shoulders, JointGroup::Hips];

    /// The head has no row in the table.
    pub fn of(joint: Joint) -> Option<JointGroup> {
        use Joint::*;
        Some(match joint {
            Head => return None,
            Neck => JointGroup::Neck,
            LShoulder | RShoulder => JointGroup::Shoulders,
            LHip | RHip => JointGroup::Hips,
            LKnee | RKnee => JointGroup::Knees,
            LAnkle | RAnkle => JointGroup::Ankles,
            LElbow | RElbow => JointGroup::Elbows,
            LWrist | RWrist => JointGroup::Wrists,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            JointGroup::Neck => "neck",
            JointGroup::Shoulders => "shoulders",
            JointGroup::Hips => "hips",
            JointGroup::Knees => "knees",
            JointGroup::Ankles => "ankles",
            JointGroup::Elbows => "elbows",
            JointGroup::Wrists => "wrists",
        }
    }
}

/// One ground-truth joint and, unless the pipeline missed it, the estimate's error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointErrorRecord {
    pub frame_id: u32,
    pub group: JointGroup,
    /// Estimate minus truth per axis, in cm; `None` for a missed joint.
    pub error_cm: Option<[f64; 3]>,
}

impl JointErrorRecord {
    pub fn euclidean_cm(&self) -> Option<f64> {
        self.error_cm
            .map(|e| (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt())
    }
}

fn matched(records: &[JointErrorRecord]) -> impl Iterator<Item = [f64; 3]> + '_ {
    records.iter().filter_map(|r| r.error_cm)
}

pub fn rmse_axis(records: &[JointErrorRecord], axis: usize) -> Result<f64> {
    if axis > 2 {
        return Err(Error::Domain(format!("axis {axis} out of range")));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for e in matched(records) {
        sum += e[axis] * e[axis];
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedStatistic("RMSE of zero estimates".into()));
    }
    Ok((sum / n as f64).sqrt())
}

pub fn average_error(records: &[JointErrorRecord]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in records {
        if let Some(d) = r.euclidean_cm() {
            sum += d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedStatistic(
            "average error of zero estimates".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Percentage of joints estimated strictly closer than `tau_cm`; missed joints fail.
pub fn pck(records: &[JointErrorRecord], tau_cm: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedStatistic("PCK of zero joints".into()));
    }
    if !(tau_cm > 0.0) {
        return Err(Error::Domain(format!(
            "PCK threshold must be positive, got {tau_cm}"
        )));
    }
    let hits = records
        .iter()
        .filter(|r| r.euclidean_cm().is_some_and(|d| d < tau_cm))
        .count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

pub const PCK_THRESHOLDS_CM: [f64; 3] = [15.0, 20.0, 30.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRow {
    pub group: JointGroup,
    /// NaN when every joint of the group was missed.
    pub rmse_cm: [f64; 3],
    pub ae_cm: f64,
    pub pck: [f64; 3],
    pub matched: usize,
    pub missed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Groups with at least one ground-truth joint, in table order.
    pub rows: Vec<GroupRow>,
}

/// One prediction/truth pair per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePoses {
    pub frame_id: u32,
    pub persons: Vec<Skeleton3D>,
}

/// Error records for every valid ground-truth joint of one frame, with people paired by
/// `match_to_ground_truth`.
pub fn frame_records(predicted: &FramePoses, truth: &FramePoses) -> Vec<JointErrorRecord> {
    let assignment = match_to_ground_truth(&predicted.persons, &truth.persons);
    let mut out = Vec::new();
    for (t, m) in truth.persons.iter().zip(assignment) {
        for j in 0..NUM_JOINTS {
            let gt = t.joints[j];
            let Some(group) = JointGroup::of(Joint::ALL[j]) else {
                continue;
            };
            if !gt.valid {
                continue;
            }
            let est = m
                .map(|p| predicted.persons[p].joints[j])
                .filter(|e| e.valid);
            out.push(JointErrorRecord {
                frame_id: truth.frame_id,
                group,
                error_cm: est.map(|e| {
                    [
                        100.0 * (e.x as f64 - gt.x as f64),
                        100.0 * (e.y as f64 - gt.y as f64),
                        100.0 * (e.z as f64 - gt.z as f64),
                    ]
                }),
            });
        }
    }
    out
}

pub fn report_from_records(records: &[JointErrorRecord]) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for group in JointGroup::ALL {
        let rs: Vec<JointErrorRecord> = records
            .iter()
            .copied()
            .filter(|r| r.group == group)
            .collect();
        if rs.is_empty() {
            continue;
        }
        let matched = rs.iter().filter(|r| r.error_cm.is_some()).count();
        let or_nan = |v: Result<f64>| match v {
            Ok(v) => Ok(v),
            Err(Error::UndefinedStatistic(_)) => Ok(f64::NAN),
            Err(e) => Err(e),
        };
        rows.push(GroupRow {
            group,
            rmse_cm: [
                or_nan(rmse_axis(&rs, 0))?,
                or_nan(rmse_axis(&rs, 1))?,
                or_nan(rmse_axis(&rs, 2))?,
            ],
            ae_cm: or_nan(average_error(&rs))?,
            pck: [
                pck(&rs, PCK_THRESHOLDS_CM[0])?,
                pck(&rs, PCK_THRESHOLDS_CM[1])?,
                pck(&rs, PCK_THRESHOLDS_CM[2])?,
            ],
            matched,
            missed: rs.len() - matched,
        });
    }
    if rows.is_empty() {
        return Err(Error::UndefinedStatistic(
            "no ground-truth joints to evaluate".into(),
        ));
    }
    Ok(EvalReport { rows })
}

/// Pairs frames by id (both lists in the same order) and pools their records.
pub fn build_report(predicted: &[FramePoses], truth: &[FramePoses]) -> Result<EvalReport> {
    report_from_records(&collect_records(predicted, truth)?)
}

pub fn collect_records(
    predicted: &[FramePoses],
    truth: &[FramePoses],
) -> Result<Vec<JointErrorRecord>> {
    if predicted.len() != truth.len() {
        return Err(Error::Alignment(format!(
            "{} predicted frames for {} ground-truth frames",
            predicted.len(),
            truth.len()
        )));
    }
    let mut records = Vec::new();
    for (p, t) in predicted.iter().zip(truth) {
        if p.frame_id != t.frame_id {
            return Err(Error::Alignment(format!(
                "predicted frame {} paired with ground-truth frame {}",
                p.frame_id, t.frame_id
            )));
        }
        records.extend(frame_records(p, t));
    }
    Ok(records)
}

impl EvalReport {
    pub fn row(&self, group: JointGroup) -> Option<&GroupRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    /// Pooled statistics over several groups, computed from their records.
    pub fn pooled(records: &[JointErrorRecord], groups: &[JointGroup]) -> Result<GroupRow> {
        let rs: Vec<JointErrorRecord> = records
            .iter()
            .copied()
            .filter(|r| groups.contains(&r.group))
            .collect();
        let matched = rs.iter().filter(|r| r.error_cm.is_some()).count();
        Ok(GroupRow {
            group: groups.first().copied().unwrap_or(JointGroup::Neck),
            rmse_cm: [rmse_axis(&rs, 0)?, rmse_axis(&rs, 1)?, rmse_axis(&rs, 2)?],
            ae_cm: average_error(&rs)?,
            pck: [
                pck(&rs, PCK_THRESHOLDS_CM[0])?,
                pck(&rs, PCK_THRESHOLDS_CM[1])?,
                pck(&rs, PCK_THRESHOLDS_CM[2])?,
            ],
            matched,
            missed: rs.len() - matched,
        })
    }

    /// Plain-text table with the columns RMSE_x, RMSE_y, RMSE_z, AE, PCK-15, PCK-20, PCK-30.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10}{:>10}{:>10}{:>10}{:>9}{:>9}{:>9}{:>9}{:>9}{:>8}",
            "",
            "RMSE_x",
            "RMSE_y",
            "RMSE_z",
            "AE",
            "PCK-15",
            "PCK-20",
            "PCK-30",
            "matched",
            "missed"
        );
        let _ = writeln!(
            s,
            "{:<10}{:>10}{:>10}{:>10}{:>9}{:>9}{:>9}{:>9}{:>9}{:>8}",
            "", "(cm)", "(cm)", "(cm)", "(cm)", "(%)", "(%)", "(%)", "", ""
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10}{:>10.1}{:>10.1}{:>10.1}{:>9.1}{:>9.1}{:>9.1}{:>9.1}{:>9}{:>8}",
                r.group.name(),
                r.rmse_cm[0],
                r.rmse_cm[1],
                r.rmse_cm[2],
                r.ae_cm,
                r.pck[0],
                r.pck[1],
                r.pck[2],
                r.matched,
                r.missed
            );
        }
        s
    }

    /// The same numbers as JSON lines, one object per group.
    pub fn to_json_lines(&self) -> String {
        let num = |v: f64| {
            if v.is_finite() {
                format!("{v:.6e}")
            } else {
                "null".to_string()
            }
        };
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{{\"group\":\"{}\",\"rmse_x_cm\":{},\"rmse_y_cm\":{},\"rmse_z_cm\":{},\"ae_cm\":{},\"pck15\":{},\"pck20\":{},\"pck30\":{},\"matched\":{},\"missed\":{}}}",
                r.group.name(),
                num(r.rmse_cm[0]),
                num(r.rmse_cm[1]),
                num(r.rmse_cm[2]),
                num(r.ae_cm),
                num(r.pck[0]),
                num(r.pck[1]),
                num(r.pck[2]),
                r.matched,
                r.missed
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(e: Option<[f64; 3]>) -> JointErrorRecord {
        JointErrorRecord {
            frame_id: 0,
            group: JointGroup::Neck,
            error_cm: e,
        }
    }

    #[test]
    fn hand_cases() {
        assert_eq!(average_error(&[rec(Some([3.0, 4.0, 0.0]))]).unwrap(), 5.0);
        let r = [rec(Some([0.0; 3])), rec(Some([2.0, 0.0, 0.0]))];
        assert!((rmse_axis(&r, 0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse_axis(&r, 1).unwrap(), 0.0);
        let d = [
            rec(Some([10.0, 0.0, 0.0])),
            rec(Some([20.0, 0.0, 0.0])),
            rec(Some([25.0, 0.0, 0.0])),
        ];
        assert!((pck(&d, 15.0).unwrap() - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(pck(&[rec(Some([15.0, 0.0, 0.0]))], 15.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_missed() {
        assert!(matches!(
            rmse_axis(&[], 0),
            Err(Error::UndefinedStatistic(_))
        ));
        assert!(matches!(
            average_error(&[rec(None)]),
            Err(Error::UndefinedStatistic(_))
        ));
        assert!(matches!(pck(&[], 15.0), Err(Error::UndefinedStatistic(_))));
        let r = [rec(Some([1.0, 0.0, 0.0])), rec(None)];
        assert_eq!(pck(&r, 15.0).unwrap(), 50.0);
        assert_eq!(average_error(&r).unwrap(), 1.0);
    }

    #[test]
    fn misaligned_frames_are_rejected() {
        let a = FramePoses {
            frame_id: 1,
            persons: vec![],
        };
        let b = FramePoses {
            frame_id: 2,
            persons: vec![],
        };
        assert!(matches!(
            build_report(std::slice::from_ref(&a), &[b]),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            build_report(&[a.clone(), a.clone()], &[a]),
            Err(Error::Alignment(_))
        ));
    }
}
