//! Generator statistics, determinism and on-disk round trip.

use std::fs;

use wpal::synth::{generate, generate_sample, read_dataset, write_dataset, AttributeKind, AttributeSchema, GenerateOptions};

#[test]
fn attribute_rates_within_three_sigma() {
    let schema = AttributeSchema::default();
    let opts = GenerateOptions {
        count: 2000,
        seed: 11,
        ..GenerateOptions::default()
    };
    let d = generate(&schema, &opts).unwrap();
    let n = d.len() as f64;
    for (a, spec) in schema.attributes.iter().enumerate() {
        let k = d.samples.iter().filter(|s| s.labels[a] == 1.0).count() as f64;
        let sigma = (n * spec.rate * (1.0 - spec.rate)).sqrt();
        assert!(
            (k - n * spec.rate).abs() <= 3.0 * sigma,
            "{}: {k} positives, expected {} ± {}",
            spec.name,
            n * spec.rate,
            3.0 * sigma
        );
    }
    let rare = schema.attributes.iter().position(|s| s.rate == 0.05).expect("rare attribute");
    assert!(d.samples.iter().any(|s| s.labels[rare] == 1.0));
}

#[test]
fn planted_centres_follow_labels_and_bands() {
    let schema = AttributeSchema::default();
    let d = generate(&schema, &GenerateOptions { count: 300, seed: 5, ..GenerateOptions::default() }).unwrap();
    for s in &d.samples {
        assert!(s.image.height >= 64 && s.image.height <= 128);
        for (a, spec) in schema.attributes.iter().enumerate() {
            let locs: Vec<_> = s.locations_of(a).collect();
            let expected = if s.labels[a] == 1.0 && spec.kind == AttributeKind::Localizable { spec.k } else { 0 };
            assert_eq!(locs.len(), expected);
            for p in locs {
                let frac = (p.y - s.body.top) / s.body.height;
                assert!(frac >= spec.band.0 - 1e-9 && frac <= spec.band.1 + 1e-9, "{}: {frac}", spec.name);
                assert!(p.y >= 0.0 && p.y < s.image.height as f64);
                assert!(p.x >= 0.0 && p.x < s.image.width as f64);
            }
        }
    }
}

#[test]
fn samples_depend_only_on_seed_and_index() {
    let schema = AttributeSchema::default();
    let opts = GenerateOptions { count: 20, seed: 9, ..GenerateOptions::default() };
    let d = generate(&schema, &opts).unwrap();
    assert_eq!(generate_sample(&schema, &opts, 13), d.samples[13]);
    let longer = generate(&schema, &GenerateOptions { count: 40, ..opts }).unwrap();
    assert_eq!(&longer.samples[..20], &d.samples[..]);
    let other = generate(&schema, &GenerateOptions { seed: 10, ..opts }).unwrap();
    assert_ne!(other.samples[0], d.samples[0]);
}

#[test]
fn dataset_round_trips_byte_identically() {
    let schema = AttributeSchema::default();
    let d = generate(&schema, &GenerateOptions { count: 12, seed: 4, ..GenerateOptions::default() }).unwrap();
    let base = std::env::temp_dir().join(format!("wpal-synth-it-{}", std::process::id()));
    let (a, b) = (base.join("a"), base.join("b"));
    write_dataset(&d, &a).unwrap();
    let back = read_dataset(&a).unwrap();
    assert_eq!(back, d);
    write_dataset(&back, &b).unwrap();
    for name in ["index.csv", "locations.csv", "bodies.csv", "schema.txt", "images/00007.ppm"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    fs::remove_dir_all(&base).unwrap();
}
