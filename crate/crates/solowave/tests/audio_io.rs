use hound::{SampleFormat, WavSpec, WavWriter};
use proptest::prelude::*;
use solowave::audio::{load_waveform, save_waveform, Encoding};
use solowave::Error;
use solowave_core::Waveform;

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn pcm16_metadata_round_trip() {
    let dir = tmp();
    let p = dir.path().join("a.wav");
    let w = Waveform::new((0..320_000).map(|i| ((i as f32) * 0.001).sin() * 0.5).collect(), 16_000).unwrap();
    save_waveform(&w, &p, Encoding::Pcm16).unwrap();
    let r = load_waveform(&p).unwrap();
    assert_eq!(r.rate, 16_000);
    assert_eq!(r.len(), 320_000);
    let bound = 2f32.powi(-15);
    assert!(w.samples.iter().zip(&r.samples).all(|(a, b)| (a - b).abs() <= bound));
}

#[test]
fn float32_is_bit_exact() {
    let dir = tmp();
    let p = dir.path().join("f.wav");
    let w = Waveform::new(vec![0.1, -0.7, 1.0e-7, 0.999_999, -1.0, 1.5], 22_050).unwrap();
    save_waveform(&w, &p, Encoding::Float32).unwrap();
    assert_eq!(load_waveform(&p).unwrap(), w);
}

#[test]
fn stereo_is_averaged_to_mono() {
    let dir = tmp();
    let p = dir.path().join("s.wav");
    let spec = WavSpec { channels: 2, sample_rate: 8000, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut wr = WavWriter::create(&p, spec).unwrap();
    for i in 0..100i16 {
        let c = i * 100;
        wr.write_sample(c).unwrap();
        wr.write_sample(-c).unwrap();
    }
    wr.finalize().unwrap();
    let w = load_waveform(&p).unwrap();
    assert_eq!(w.len(), 100);
    assert!(w.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn errors() {
    let dir = tmp();
    assert!(matches!(load_waveform(dir.path().join("missing.wav")), Err(Error::Missing(_))));

    let p = dir.path().join("empty.wav");
    let spec = WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 16, sample_format: SampleFormat::Int };
    WavWriter::create(&p, spec).unwrap().finalize().unwrap();
    assert!(matches!(load_waveform(&p), Err(Error::EmptyAudio(_))));

    let p = dir.path().join("pcm24.wav");
    let spec = WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 24, sample_format: SampleFormat::Int };
    let mut wr = WavWriter::create(&p, spec).unwrap();
    wr.write_sample(5i32).unwrap();
    wr.finalize().unwrap();
    assert!(matches!(load_waveform(&p), Err(Error::Unsupported { .. })));

    let nan = Waveform { samples: vec![0.0, f32::NAN], rate: 8000 };
    assert!(save_waveform(&nan, dir.path().join("nan.wav"), Encoding::Pcm16).is_err());
    let w = Waveform::new(vec![0.0], 8000).unwrap();
    assert!(save_waveform(&w, dir.path().join("no/such/dir/x.wav"), Encoding::Pcm16).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn round_trip_within_quantization(xs in proptest::collection::vec(-1.0f32..1.0, 1..400), rate in 1000u32..48_000) {
        let dir = tmp();
        let w = Waveform::new(xs, rate).unwrap();
        let p = dir.path().join("p.wav");
        save_waveform(&w, &p, Encoding::Pcm16).unwrap();
        let r = load_waveform(&p).unwrap();
        prop_assert_eq!(r.rate, rate);
        for (a, b) in w.samples.iter().zip(&r.samples) {
            prop_assert!((a - b).abs() <= 2f32.powi(-15));
        }
        let q = dir.path().join("q.wav");
        save_waveform(&w, &q, Encoding::Float32).unwrap();
        prop_assert_eq!(load_waveform(&q).unwrap(), w);
    }
}
