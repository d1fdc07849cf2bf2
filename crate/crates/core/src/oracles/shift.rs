use crate::instance::Layout;

/// Refill one chain of segments in order, keeping its total.
///
/// Earlier segments must have the larger slopes. Mass beyond the total
/// capacity stays on the last segment so the total is never lost. A chain that
/// is already a prefix fill is left untouched, which makes the operator
/// exactly idempotent.
pub fn shift_chain(x: &mut [f64], caps: &[f64]) {
    debug_assert_eq!(x.len(), caps.len());
    if is_prefix_fill(x, caps) {
        return;
    }
    let total: f64 = x.iter().sum();
    let mut rem = total;
    let last = x.len() - 1;
    for k in 0..x.len() {
        let v = if k == last { rem } else { rem.min(caps[k]) };
        let v = v.max(0.0);
        x[k] = v;
        rem -= v;
    }
}

fn is_prefix_fill(x: &[f64], caps: &[f64]) -> bool {
    let mut k = 0;
    while k < x.len() && x[k] == caps[k] {
        k += 1;
    }
    if k < x.len() {
        if x[k] < 0.0 || x[k] > caps[k] {
            return false;
        }
        k += 1;
    }
    x[k.min(x.len())..].iter().all(|&v| v == 0.0)
}

/// Apply [`shift_chain`] to every (agent, good) chain of an allocation.
pub fn shift_in_place(layout: &Layout, x: &mut [f64]) {
    let mut caps = Vec::new();
    for chain in &layout.chains {
        if chain.range.len() < 2 {
            continue;
        }
        caps.clear();
        caps.extend(layout.coords[chain.range.clone()].iter().map(|c| c.cap));
        shift_chain(&mut x[chain.range.clone()], &caps);
    }
}

pub fn shift(layout: &Layout, x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    shift_in_place(layout, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: &[f64], caps: &[f64]) -> Vec<f64> {
        let mut x = x.to_vec();
        shift_chain(&mut x, caps);
        x
    }

    #[test]
    fn fills_highest_slope_first() {
        let out = run(&[0.2, 0.4], &[0.5, 0.5]);
        assert_eq!(out[0], 0.5);
        assert!((out[1] - 0.1).abs() < 1e-15);
        assert_eq!(out.iter().sum::<f64>(), 0.2 + 0.4);
    }

    #[test]
    fn shifted_input_unchanged() {
        let x = [0.5, 0.1];
        assert_eq!(run(&x, &[0.5, 0.5]), x.to_vec());
        assert_eq!(run(&[0.3, 0.0, 0.0], &[0.4, 0.3, 0.3]), vec![0.3, 0.0, 0.0]);
    }

    #[test]
    fn full_transfer() {
        assert_eq!(run(&[0.0, 0.5], &[0.5, 0.5]), vec![0.5, 0.0]);
    }

    #[test]
    fn three_segments() {
        let out = run(&[0.0, 0.1, 0.3], &[0.2, 0.3, 0.5]);
        assert_eq!(out[0], 0.2);
        assert!((out[1] - 0.2).abs() < 1e-15);
        assert_eq!(out[2], 0.0);
        assert_eq!(run(&out, &[0.2, 0.3, 0.5]), out);
    }
}
