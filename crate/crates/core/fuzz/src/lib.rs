//! Checks run by the fuzz targets. Also replayed over the checked-in corpus
//! by the core crate's `fuzz_corpus` test.

use std::str::FromStr;

use ddsim::scenario::{parse_matrix, parse_scenario, parse_visits, HamiltonianPreset};

/// Largest composite dimension for which an accepted scenario is also prepared.
const PREPARE_DIM: usize = 16;

pub fn scenario_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(s) = parse_scenario(text) else {
        return;
    };
    let again = parse_scenario(&s.to_json()).expect("emitted scenario parses");
    assert_eq!(again, s);
    if s.space.dim_s.saturating_mul(s.space.dim_e) <= PREPARE_DIM {
        let _ = s.prepare();
    }
}

pub fn matrix_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(m) = parse_matrix(text) else {
        return;
    };
    let json = serde_json::to_string(&m).expect("matrix serializes");
    assert_eq!(parse_matrix(&json).expect("emitted matrix parses"), m);
}

pub fn visits_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(v) = parse_visits(text) {
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(parse_visits(&json).unwrap(), v);
    }
}

pub fn hamiltonian_preset(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = HamiltonianPreset::from_str(text) {
        assert_eq!(HamiltonianPreset::from_str(&p.to_string()).unwrap(), p);
    }
}
