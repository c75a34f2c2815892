//! Invariant sweeps over many grid sizes, checked against a direct meshgrid
//! construction of the cell centres.

use crate::geo::LocalOffset;
use crate::rasterizer::{derive_spec, rasterize_offsets, GridSpec, Parity};

/// Signature of the lattice builder under test.
pub type LatticeFn = fn(&GridSpec) -> (Vec<LocalOffset>, Vec<u64>);

/// Cell centres built directly: `((i + ½) − s/2)·B` metres on each axis,
/// i.e. `(2i + 1 − s)·B` half-metres, sorted by `(dy, dx)`.
pub fn meshgrid_oracle(s: u64, b_real_m: i64) -> Vec<LocalOffset> {
    let s = s as i64;
    let mut out = Vec::with_capacity((s * s) as usize);
    for row in 0..s {
        for col in 0..s {
            out.push(LocalOffset::new(
                (2 * col + 1 - s) * b_real_m,
                (2 * row + 1 - s) * b_real_m,
            ));
        }
    }
    out.sort_by_key(LocalOffset::row_major_key);
    out
}

/// `(A, r)` pairs that all round to `s` steps, including sizes that are not
/// a whole multiple of the resolution.
pub fn sweep_pairs(s: u64) -> Vec<(f64, f64)> {
    let s = s as f64;
    vec![
        (s * 100.0, 100.0),
        (s * 500.0 + 150.0, 500.0),
        (s * 250.0 - 60.0, 250.0),
    ]
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub cases: usize,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks one spec: oracle equality, `(n+2)²` layer growth, `#centres == G`
/// and the parity/path correspondence.
pub fn check_spec(spec: &GridSpec, lattice: LatticeFn) -> Vec<String> {
    let mut failures = Vec::new();
    let tag = format!("A={} r={} s={}", spec.a_m, spec.r_m, spec.s);
    let (offsets, counts) = lattice(spec);

    if offsets.len() as u64 != spec.g {
        failures.push(format!("{tag}: #latlon {} != G {}", offsets.len(), spec.g));
    }
    if offsets != meshgrid_oracle(spec.s, spec.b_real_m) {
        failures.push(format!("{tag}: centres differ from the meshgrid oracle"));
    }
    let want = spec.expected_virtual_counts();
    if counts != want {
        failures.push(format!("{tag}: layer counts {counts:?}, expected {want:?}"));
    }
    let parity_ok = match spec.parity {
        Parity::Trivial => spec.s <= 1 && spec.i_total == 0,
        Parity::Even => spec.s.is_multiple_of(2) && spec.s >= 2 && spec.i_total == spec.s / 2,
        Parity::Odd => spec.s % 2 == 1 && spec.s >= 3 && spec.i_total == spec.s - 1,
    };
    if !parity_ok {
        failures.push(format!(
            "{tag}: parity {} inconsistent with i_total {}",
            spec.parity, spec.i_total
        ));
    }
    failures
}

/// Sweeps `s = 1..=max_s` over [`sweep_pairs`].
pub fn run_sweep(max_s: u64, lattice: LatticeFn) -> VerifyReport {
    let mut report = VerifyReport::default();
    for s in 1..=max_s {
        for (a, r) in sweep_pairs(s) {
            report.cases += 1;
            match derive_spec(a, r) {
                Ok(spec) if spec.s == s => report.failures.extend(check_spec(&spec, lattice)),
                Ok(spec) => report
                    .failures
                    .push(format!("A={a} r={r}: expected s={s}, got {}", spec.s)),
                Err(e) => report.failures.push(format!("A={a} r={r}: {e}")),
            }
        }
    }
    report
}

pub fn run_default_sweep(max_s: u64) -> VerifyReport {
    run_sweep(max_s, rasterize_offsets)
}
