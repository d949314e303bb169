#![no_main]

use libfuzzer_sys::fuzz_target;
use lingua_dp::config::RunConfig;
use lingua_dp::synth::SynthSpec;
use lingua_dp::trainer::TrainConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::parse(text) {
        let _ = cfg.train_config(TrainConfig::default());
        let _ = cfg.synth_spec(SynthSpec::default());
    }
});
