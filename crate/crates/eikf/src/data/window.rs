//! Rolling windows: slice a scaled segment into (history, target) pairs with
//! observation masks. Windows never straddle split boundaries; the caller
//! windows each split separately.

use crate::numeric::Tensor;

use super::series::RawSeries;
use super::{DataError, Result};

/// One rolling window. `history` is n×τ (row per sensor), already zero-filled
/// at unobserved cells; `target` is n×υ; `history_mask` is n×τ with 1 =
/// observed. `start` indexes the window's first history row in the segment.
#[derive(Debug, Clone)]
pub struct Window {
    pub history: Tensor,
    pub target: Tensor,
    pub history_mask: Tensor,
    pub start: usize,
}

#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub windows: Vec<Window>,
    pub tau: usize,
    pub upsilon: usize,
    pub num_sensors: usize,
}

/// Window a (scaled) segment. `mask` rows align with the segment rows; pass
/// `None` for fully observed data. Count = T_seg − τ − υ + 1; window k covers
/// history rows [k, k+τ) and target rows [k+τ, k+τ+υ).
pub fn make_windows(
    segment: &RawSeries,
    mask: Option<&[u8]>,
    tau: usize,
    upsilon: usize,
) -> Result<WindowedDataset> {
    let (t, n) = (segment.len(), segment.num_sensors());
    if tau == 0 || upsilon == 0 {
        return Err(DataError::Invalid(
            "window lengths tau and upsilon must be positive".into(),
        ));
    }
    if t < tau + upsilon {
        return Err(DataError::Invalid(format!(
            "segment of {t} rows cannot hold a {tau}+{upsilon} window"
        )));
    }
    if let Some(m) = mask {
        if m.len() != t * n {
            return Err(DataError::Invalid(format!(
                "mask length {} mismatches segment {t}x{n}",
                m.len()
            )));
        }
    }
    let count = t - tau - upsilon + 1;
    let mut windows = Vec::with_capacity(count);
    for k in 0..count {
        let mut history = vec![0.0; n * tau];
        let mut history_mask = vec![0.0; n * tau];
        for s in 0..tau {
            for i in 0..n {
                let observed = mask.map_or(1.0, |m| f64::from(m[(k + s) * n + i]));
                history_mask[i * tau + s] = observed;
                history[i * tau + s] = segment.at(k + s, i) * observed;
            }
        }
        let mut target = vec![0.0; n * upsilon];
        for s in 0..upsilon {
            for i in 0..n {
                target[i * upsilon + s] = segment.at(k + tau + s, i);
            }
        }
        windows.push(Window {
            history: Tensor::new(vec![n, tau], history).expect("window shape"),
            target: Tensor::new(vec![n, upsilon], target).expect("window shape"),
            history_mask: Tensor::new(vec![n, tau], history_mask).expect("window shape"),
            start: k,
        });
    }
    Ok(WindowedDataset {
        windows,
        tau,
        upsilon,
        num_sensors: n,
    })
}
