#![cfg_attr(fuzzing, no_main)]

#[cfg(fuzzing)]
libfuzzer_sys::fuzz_target!(|data: &[u8]| ddsim_fuzz::visits_json(data));

/// Outside a fuzzing build: replay the files named on the command line.
#[cfg(not(fuzzing))]
fn main() {
    for path in std::env::args().skip(1) {
        ddsim_fuzz::visits_json(&std::fs::read(&path).expect("readable input"));
    }
}
