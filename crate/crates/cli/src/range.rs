//! Threshold lists: `900`, `300:900:100`, or comma-separated mixes of both.

/// Rounds away binary noise so `0.2:0.8:0.1` prints as 0.3 rather than 0.30000000000000004.
fn tidy(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn parse_number(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Expands `start:stop:step`, including `stop` when a step lands on it.
fn expand(item: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = item.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(vec![parse_number(single)?]),
        [start, stop, step] => {
            let (start, stop, step) = (parse_number(start)?, parse_number(stop)?, parse_number(step)?);
            if step <= 0.0 {
                return Err(format!("range step must be > 0 in `{item}`"));
            }
            if stop < start {
                return Err(format!("range stop is below start in `{item}`"));
            }
            let slack = step * 1e-9;
            let mut out = Vec::new();
            let mut k = 0u32;
            loop {
                let v = start + f64::from(k) * step;
                if v > stop + slack {
                    break;
                }
                out.push(tidy(v));
                k += 1;
                if k > 100_000 {
                    return Err(format!("range `{item}` has too many steps"));
                }
            }
            Ok(out)
        }
        _ => Err(format!("`{item}` is neither a number nor start:stop:step")),
    }
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in text.split(',').filter(|s| !s.trim().is_empty()) {
        out.extend(expand(item.trim())?);
    }
    if out.is_empty() {
        return Err("empty threshold list".into());
    }
    Ok(out)
}
