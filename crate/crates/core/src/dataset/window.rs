use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::UnitSeries;
use crate::{Error, Result};

/// Location of one window inside a [`WindowSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowIndex {
    /// Position of the unit in `WindowSet::units`.
    pub unit_pos: usize,
    pub unit_id: u32,
    /// 1-based cycle of the last row in the window.
    pub end_cycle: u32,
    /// Leading rows filled by repeating the unit's first observation.
    pub pad_rows: usize,
    pub rul_target: Option<f64>,
    pub mode_label: Option<usize>,
}

/// A materialized `ntw × S` window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInstance {
    pub unit_id: u32,
    pub end_cycle: u32,
    pub data: Vec<f64>,
    pub ntw: usize,
    pub n_sensors: usize,
    pub rul_target: Option<f64>,
    pub mode_label: Option<usize>,
}

impl WindowInstance {
    /// One-hot failure-mode vector of length `n_modes`.
    pub fn one_hot(&self, n_modes: usize) -> Option<Vec<f64>> {
        self.mode_label.map(|m| {
            let mut q = vec![0.0; n_modes];
            q[m] = 1.0;
            q
        })
    }
}

/// Sliding windows over a set of units. Windows are views into the unit
/// series and are only copied out on demand.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub units: Arc<Vec<UnitSeries>>,
    pub ntw: usize,
    pub stride: usize,
    pub windows: Vec<WindowIndex>,
    /// Units shorter than `ntw` that were skipped (`pad_short = false`).
    pub skipped: Vec<u32>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_sensors(&self) -> usize {
        self.units.first().map_or(0, UnitSeries::n_sensors)
    }

    /// Copy window `i` into `buf` (row-major `ntw × S`).
    pub fn fill(&self, i: usize, buf: &mut Vec<f64>) {
        let w = &self.windows[i];
        let u = &self.units[w.unit_pos];
        let s = u.n_sensors();
        buf.clear();
        for _ in 0..w.pad_rows {
            buf.extend_from_slice(u.row(0));
        }
        let real_rows = self.ntw - w.pad_rows;
        let end = w.end_cycle as usize;
        buf.extend_from_slice(&u.values[(end - real_rows) * s..end * s]);
    }

    pub fn instance(&self, i: usize) -> WindowInstance {
        let w = &self.windows[i];
        let mut data = Vec::with_capacity(self.ntw * self.n_sensors());
        self.fill(i, &mut data);
        WindowInstance {
            unit_id: w.unit_id,
            end_cycle: w.end_cycle,
            data,
            ntw: self.ntw,
            n_sensors: self.n_sensors(),
            rul_target: w.rul_target,
            mode_label: w.mode_label,
        }
    }

    /// Attach failure-mode labels per unit. Units without a label error out.
    pub fn with_modes(mut self, labels: &BTreeMap<u32, usize>) -> Result<Self> {
        for w in &mut self.windows {
            let m = labels
                .get(&w.unit_id)
                .ok_or_else(|| Error::Integrity(format!("no failure-mode label for unit {}", w.unit_id)))?;
            w.mode_label = Some(*m);
        }
        Ok(self)
    }

    /// Restrict to the given unit ids, keeping order.
    pub fn subset_units(&self, keep: &[u32]) -> Self {
        let windows = self
            .windows
            .iter()
            .filter(|w| keep.contains(&w.unit_id))
            .copied()
            .collect();
        Self {
            units: Arc::clone(&self.units),
            ntw: self.ntw,
            stride: self.stride,
            windows,
            skipped: self.skipped.clone(),
        }
    }

    /// Distinct unit ids in window order.
    pub fn unit_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = Vec::new();
        for w in &self.windows {
            if ids.last() != Some(&w.unit_id) && !ids.contains(&w.unit_id) {
                ids.push(w.unit_id);
            }
        }
        ids
    }

    /// Contiguous runs of window positions belonging to the same unit.
    pub fn unit_runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=self.windows.len() {
            if i == self.windows.len() || self.windows[i].unit_id != self.windows[start].unit_id {
                if i > start {
                    runs.push(start..i);
                }
                start = i;
            }
        }
        runs
    }
}

/// Cut sliding windows ending at cycles `ntw, ntw + stride, …` up to `T_i`.
///
/// Units shorter than `ntw` are skipped with a warning, or, when
/// `pad_short`, produce one window ending at `T_i` whose leading rows repeat
/// the first observation.
pub fn make_windows(units: Vec<UnitSeries>, ntw: usize, stride: usize, pad_short: bool) -> Result<WindowSet> {
    if ntw == 0 || stride == 0 {
        return Err(Error::Parameter(format!(
            "window size and stride must be positive (ntw={ntw}, stride={stride})"
        )));
    }
    let mut windows = Vec::new();
    let mut skipped = Vec::new();
    for (pos, u) in units.iter().enumerate() {
        u.check_shape()?;
        let t_i = u.len();
        let label = |end: usize| u.rul_at(end - 1).map(f64::from);
        if t_i >= ntw {
            let mut end = ntw;
            while end <= t_i {
                windows.push(WindowIndex {
                    unit_pos: pos,
                    unit_id: u.unit_id,
                    end_cycle: end as u32,
                    pad_rows: 0,
                    rul_target: label(end),
                    mode_label: None,
                });
                end += stride;
            }
        } else if pad_short && t_i > 0 {
            windows.push(WindowIndex {
                unit_pos: pos,
                unit_id: u.unit_id,
                end_cycle: t_i as u32,
                pad_rows: ntw - t_i,
                rul_target: label(t_i),
                mode_label: None,
            });
        } else {
            skipped.push(u.unit_id);
        }
    }
    if !skipped.is_empty() {
        log::warn!("units shorter than the window ({ntw} cycles) were skipped: {skipped:?}");
    }
    Ok(WindowSet {
        units: Arc::new(units),
        ntw,
        stride,
        windows,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_unit(id: u32, len: usize, s: usize) -> UnitSeries {
        UnitSeries {
            unit_id: id,
            sensor_names: (0..s).map(|j| format!("s{j}")).collect(),
            values: (0..len * s).map(|k| (k / s) as f64 + (k % s) as f64 * 0.1).collect(),
            op_settings: vec![[0.0; 3]; len],
            rul: Some((0..len as u32).rev().collect()),
        }
    }

    #[test]
    fn hundred_cycles_window_sixty() {
        let ws = make_windows(vec![ramp_unit(1, 100, 2)], 60, 1, false).unwrap();
        assert_eq!(ws.len(), 41);
        assert_eq!(ws.windows[0].end_cycle, 60);
        assert_eq!(ws.windows[40].end_cycle, 100);
        assert_eq!(ws.windows[40].rul_target, Some(0.0));
        assert_eq!(ws.windows[0].rul_target, Some(40.0));
    }

    #[test]
    fn boundary_length_gives_one_window() {
        let ws = make_windows(vec![ramp_unit(1, 60, 2)], 60, 1, false).unwrap();
        assert_eq!(ws.len(), 1);
    }

    #[test]
    fn short_unit_is_padded_with_first_row() {
        let ws = make_windows(vec![ramp_unit(3, 38, 2)], 60, 1, true).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws.windows[0].pad_rows, 22);
        let inst = ws.instance(0);
        assert_eq!(inst.data.len(), 120);
        for r in 0..22 {
            assert_eq!(&inst.data[r * 2..r * 2 + 2], &[0.0, 0.1]);
        }
        assert_eq!(&inst.data[22 * 2..22 * 2 + 2], &[0.0, 0.1]);
        assert_eq!(&inst.data[23 * 2..23 * 2 + 2], &[1.0, 1.1]);
        assert_eq!(&inst.data[118..120], &[37.0, 37.1]);
    }

    #[test]
    fn short_unit_skipped_without_padding() {
        let ws = make_windows(vec![ramp_unit(3, 38, 2), ramp_unit(4, 61, 2)], 60, 1, false).unwrap();
        assert_eq!(ws.skipped, vec![3]);
        assert_eq!(ws.len(), 2);
    }

    #[test]
    fn rows_are_in_cycle_order() {
        let ws = make_windows(vec![ramp_unit(1, 10, 1)], 4, 3, false).unwrap();
        let ends: Vec<u32> = ws.windows.iter().map(|w| w.end_cycle).collect();
        assert_eq!(ends, vec![4, 7, 10]);
        assert_eq!(ws.instance(1).data, vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn zero_params_rejected() {
        assert!(make_windows(vec![ramp_unit(1, 10, 1)], 0, 1, false).is_err());
        assert!(make_windows(vec![ramp_unit(1, 10, 1)], 3, 0, false).is_err());
    }

    proptest! {
        #[test]
        fn window_count_formula(lens in proptest::collection::vec(1usize..120, 1..6), ntw in 1usize..50, stride in 1usize..7) {
            let units: Vec<_> = lens.iter().enumerate().map(|(i, &l)| ramp_unit(i as u32 + 1, l, 1)).collect();
            let ws = make_windows(units, ntw, stride, false).unwrap();
            let expected: usize = lens.iter().map(|&t| if t >= ntw { (t - ntw) / stride + 1 } else { 0 }).sum();
            prop_assert_eq!(ws.len(), expected);
        }
    }
}
