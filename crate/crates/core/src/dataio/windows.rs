use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeries};

/// What a set of windows is used for; test purposes pin the step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPurpose {
    Train,
    /// Non-overlapping windows, `S = W`.
    TestReco,
    /// Dense windows, `S = 1`.
    TestFc,
}

/// Strided view of a series. Window `i` covers `[i·S, i·S + W)`; only the last
/// window can run past the end, and it is padded by repeating the final row.
#[derive(Debug, Clone, Copy)]
pub struct WindowSet<'a> {
    source: &'a TimeSeries,
    window: usize,
    step: usize,
    count: usize,
    pad_len: usize,
}

pub fn make_windows(
    ts: &TimeSeries,
    window: usize,
    step: usize,
    purpose: WindowPurpose,
) -> Result<WindowSet<'_>, DataError> {
    let step = match purpose {
        WindowPurpose::Train => step,
        WindowPurpose::TestReco => window,
        WindowPurpose::TestFc => 1,
    };
    let len = ts.len();
    if window == 0 || window > len {
        return Err(DataError::WindowTooLarge { window, len });
    }
    if step == 0 || step > window {
        return Err(DataError::InvalidStep { step, window });
    }
    let count = (len - window).div_ceil(step) + 1;
    let last_end = (count - 1) * step + window;
    Ok(WindowSet {
        source: ts,
        window,
        step,
        count,
        pad_len: last_end - len,
    })
}

impl<'a> WindowSet<'a> {
    pub fn source(&self) -> &'a TimeSeries {
        self.source
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of repeated rows appended to the last window.
    pub fn pad_len(&self) -> usize {
        self.pad_len
    }

    pub fn n_variates(&self) -> usize {
        self.source.n_variates()
    }

    pub fn start(&self, i: usize) -> usize {
        i * self.step
    }

    /// Appends window `i` (`W × N`, row-major) to `buf`.
    pub fn extend_window(&self, i: usize, buf: &mut Vec<f64>) {
        assert!(i < self.count, "window {i} out of range");
        let t_max = self.source.len() - 1;
        let s = self.start(i);
        for t in s..s + self.window {
            buf.extend_from_slice(self.source.row(t.min(t_max)));
        }
    }

    pub fn get(&self, i: usize) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.window * self.n_variates());
        self.extend_window(i, &mut buf);
        buf
    }

    /// The row right after window `i`, when it exists.
    pub fn next_row(&self, i: usize) -> Option<&'a [f64]> {
        let t = self.start(i) + self.window;
        (t < self.source.len()).then(|| self.source.row(t))
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.count).map(|i| self.get(i))
    }
}
