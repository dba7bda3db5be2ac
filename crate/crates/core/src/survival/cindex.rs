use crate::error::{Error, Result};

/// Harrell's C. A pair is comparable when the earlier time is an observed
/// event and the times differ; tied risks count one half.
pub fn concordance_index(risk: &[f64], time: &[f64], event: &[bool]) -> Result<f64> {
    if risk.len() != time.len() || time.len() != event.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} risks, {} times, {} events",
            risk.len(),
            time.len(),
            event.len()
        )));
    }
    if risk.iter().any(|r| r.is_nan()) {
        return Err(Error::InvalidParameter("NaN risk score".into()));
    }
    // Counted in half units so the ratio is exact.
    let mut halves: u64 = 0;
    let mut pairs: u64 = 0;
    for i in 0..risk.len() {
        if !event[i] {
            continue;
        }
        for j in 0..risk.len() {
            if time[i] < time[j] {
                pairs += 1;
                halves += if risk[i] > risk[j] {
                    2
                } else if risk[i] == risk[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    if pairs == 0 {
        return Err(Error::Degenerate("no comparable pairs".into()));
    }
    Ok(halves as f64 / (2 * pairs) as f64)
}
