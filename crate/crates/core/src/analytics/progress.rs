//! Longitudinal progress profiles for students and faculty.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::domain::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProgressEventKind {
    /// A question of the lab was allocated to the student.
    Assigned,
    /// The student submitted code.
    Submitted,
    /// The student's final score for the lab was settled (after the viva or an
    /// override). A later completion of the same lab replaces an earlier one.
    Completed { final_score: f64 },
    /// The faculty member activated one of their labs for a section.
    Activated { section: String },
    /// A student in one of the faculty member's labs completed it.
    ClassResult { student_id: String, final_score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub subject_id: String,
    pub lab_id: String,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: ProgressEventKind,
}

impl ProgressEvent {
    /// Events that show up in the activity heatmap.
    fn is_activity(&self) -> bool {
        matches!(
            self.kind,
            ProgressEventKind::Submitted | ProgressEventKind::Completed { .. } | ProgressEventKind::Activated { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressPoint {
    pub lab_id: String,
    pub final_score: f64,
    pub completed_at: DateTime<Utc>,
}

/// Activity counts per ISO weekday (rows, Monday first) and week of the
/// observed range (columns). Week 0 starts on the Monday on or before the
/// first activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityHeatmap {
    pub origin: Option<NaiveDate>,
    pub weeks: usize,
    pub counts: [Vec<u64>; 7],
}

impl ActivityHeatmap {
    pub fn empty() -> Self {
        Self { origin: None, weeks: 0, counts: Default::default() }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Count for an ISO weekday (1 = Monday) and week index.
    pub fn get(&self, iso_weekday: u32, week: usize) -> u64 {
        let Some(row) = (iso_weekday as usize).checked_sub(1).and_then(|r| self.counts.get(r)) else {
            return 0;
        };
        row.get(week).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressProfile {
    pub subject_id: String,
    pub role: Role,
    /// Students: their final score per completed lab. Faculty: the class mean
    /// per lab, stamped with the latest completion in that lab.
    pub series: Vec<ProgressPoint>,
    pub heatmap: ActivityHeatmap,
    /// Students: labs assigned. Faculty: labs activated.
    pub labs_total: usize,
    /// Students: labs completed. Faculty: activated labs with at least one
    /// class result.
    pub labs_completed: usize,
    pub completion_ratio: f64,
    /// Faculty only: number of activated labs per section.
    pub labs_conducted: BTreeMap<String, u64>,
    /// Faculty only: mean change in class mean between successive labs.
    pub mean_class_gain: Option<f64>,
}

fn week_origin(d: NaiveDate) -> NaiveDate {
    d - Days::new(u64::from(d.weekday().num_days_from_monday()))
}

fn build_heatmap(events: &[&ProgressEvent]) -> ActivityHeatmap {
    let days: Vec<NaiveDate> = events.iter().filter(|e| e.is_activity()).map(|e| e.at.date_naive()).collect();
    let Some(first) = days.iter().min() else {
        return ActivityHeatmap::empty();
    };
    let origin = week_origin(*first);
    let week_of = |d: &NaiveDate| ((*d - origin).num_days() / 7) as usize;
    let weeks = days.iter().map(week_of).max().unwrap_or(0) + 1;
    let mut counts: [Vec<u64>; 7] = Default::default();
    for row in counts.iter_mut() {
        *row = vec![0; weeks];
    }
    for d in &days {
        counts[d.weekday().num_days_from_monday() as usize][week_of(d)] += 1;
    }
    ActivityHeatmap { origin: Some(origin), weeks, counts }
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn ordered_series(points: BTreeMap<String, ProgressPoint>) -> Vec<ProgressPoint> {
    let mut series: Vec<ProgressPoint> = points.into_values().collect();
    series.sort_by(|a, b| a.completed_at.cmp(&b.completed_at).then_with(|| a.lab_id.cmp(&b.lab_id)));
    series
}

/// Folds one subject's events (in timestamp order) into a profile. The role
/// selects the student or faculty flavour.
pub fn build_progress_profile(
    subject_id: &str,
    role: Role,
    events: &[ProgressEvent],
) -> Result<ProgressProfile, AnalyticsError> {
    if let Some(e) = events.iter().find(|e| e.subject_id != subject_id) {
        return Err(AnalyticsError::MixedSubjects { expected: subject_id.to_string(), found: e.subject_id.clone() });
    }
    let mut ordered: Vec<&ProgressEvent> = events.iter().collect();
    ordered.sort_by(|a, b| a.at.cmp(&b.at).then_with(|| a.lab_id.cmp(&b.lab_id)));
    let heatmap = build_heatmap(&ordered);

    let mut profile = ProgressProfile {
        subject_id: subject_id.to_string(),
        role,
        series: Vec::new(),
        heatmap,
        labs_total: 0,
        labs_completed: 0,
        completion_ratio: 0.0,
        labs_conducted: BTreeMap::new(),
        mean_class_gain: None,
    };

    match role {
        Role::Student => {
            let mut assigned = BTreeSet::new();
            let mut done: BTreeMap<String, ProgressPoint> = BTreeMap::new();
            for e in &ordered {
                match &e.kind {
                    ProgressEventKind::Assigned | ProgressEventKind::Submitted => {
                        assigned.insert(e.lab_id.clone());
                    }
                    ProgressEventKind::Completed { final_score } => {
                        assigned.insert(e.lab_id.clone());
                        done.insert(
                            e.lab_id.clone(),
                            ProgressPoint { lab_id: e.lab_id.clone(), final_score: *final_score, completed_at: e.at },
                        );
                    }
                    _ => {}
                }
            }
            profile.labs_total = assigned.len();
            profile.labs_completed = done.len();
            profile.series = ordered_series(done);
        }
        Role::Faculty => {
            let mut activated: BTreeMap<String, String> = BTreeMap::new();
            // lab → (student → latest score), latest completion time
            let mut results: BTreeMap<String, (BTreeMap<String, f64>, DateTime<Utc>)> = BTreeMap::new();
            for e in &ordered {
                match &e.kind {
                    ProgressEventKind::Activated { section } => {
                        activated.entry(e.lab_id.clone()).or_insert_with(|| section.clone());
                    }
                    ProgressEventKind::ClassResult { student_id, final_score } => {
                        let entry = results.entry(e.lab_id.clone()).or_insert_with(|| (BTreeMap::new(), e.at));
                        entry.0.insert(student_id.clone(), *final_score);
                        entry.1 = e.at;
                    }
                    _ => {}
                }
            }
            for section in activated.values() {
                *profile.labs_conducted.entry(section.clone()).or_insert(0) += 1;
            }
            let points: BTreeMap<String, ProgressPoint> = results
                .into_iter()
                .map(|(lab, (scores, at))| {
                    let mean = sorted_mean(scores.into_values().collect());
                    (lab.clone(), ProgressPoint { lab_id: lab, final_score: mean, completed_at: at })
                })
                .collect();
            profile.labs_total = activated.len();
            profile.labs_completed = points.keys().filter(|l| activated.contains_key(*l)).count();
            profile.series = ordered_series(points);
            if profile.series.len() >= 2 {
                let gains: Vec<f64> = profile.series.windows(2).map(|w| w[1].final_score - w[0].final_score).collect();
                profile.mean_class_gain = Some(sorted_mean(gains));
            }
        }
    }
    if profile.labs_total > 0 {
        profile.completion_ratio = (profile.labs_completed as f64 / profile.labs_total as f64).clamp(0.0, 1.0);
    }
    Ok(profile)
}
