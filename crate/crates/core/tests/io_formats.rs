use std::cell::Cell;
use std::io::{BufReader, Read, Write};
use std::rc::Rc;
use std::sync::Arc;
use std::time::Instant;

use classvec::io::{self, ActivationReader};
use classvec::synth::standard_manifest;
use classvec::{DistanceMatrix, Error, SparseActivationVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn standard_manifest_round_trips_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.tsv");
    let mut text = String::new();
    for g in ["3a", "3b", "4a", "4b", "4c", "4d", "4e", "5a", "5b"] {
        for (b, dim) in [("1x1", 64), ("3x3", 128), ("5x5", 32)] {
            text.push_str(&format!("{g}/{b}\t{g}\t{dim}\n"));
        }
    }
    std::fs::write(&path, &text).unwrap();
    let m = io::load_manifest(&path).unwrap();
    assert_eq!(m.len(), 27);
    assert_eq!(m.groups().len(), 9);
    assert_eq!(m.total_dim(), 9 * (64 + 128 + 32));
    let top = m.select_groups(["5a", "5b"]).unwrap();
    assert_eq!((0..27).filter(|&l| top.contains_layer(l)).count(), 6);

    let again = dir.path().join("again.tsv");
    io::write_manifest(&again, &m).unwrap();
    assert_eq!(std::fs::read_to_string(&again).unwrap(), text);
}

/// Counts bytes handed to the buffered reader above it.
struct CountingReader<R> {
    inner: R,
    consumed: Rc<Cell<usize>>,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.consumed.set(self.consumed.get() + n);
        Ok(n)
    }
}

#[test]
fn twenty_thousand_records_stream_with_bounded_lookahead() {
    let manifest = Arc::new(standard_manifest(256).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("activations.tsv");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut line_ends = Vec::with_capacity(20_000);
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path).unwrap());
        let mut written = 0usize;
        for i in 0..20_000 {
            let entries: Vec<(usize, usize, f64)> = (0..8)
                .map(|k| {
                    (
                        k * 3 + rng.random_range(0..3),
                        rng.random_range(0..256),
                        rng.random_range(0.1..5.0),
                    )
                })
                .collect();
            let mut v: Vec<(usize, usize, f64)> = entries;
            v.sort_by_key(|e| (e.0, e.1));
            v.dedup_by_key(|e| (e.0, e.1));
            let record = io::ActivationRecord {
                image_id: format!("img_{i:06}"),
                class_id: format!("c{:03}", i % 100),
                vector: SparseActivationVector::from_layer_entries(manifest.clone(), v).unwrap(),
            };
            let mut line = Vec::new();
            io::write_activation_record(&mut line, &record).unwrap();
            w.write_all(&line).unwrap();
            written += line.len();
            line_ends.push(written);
        }
    }

    const BUFFER: usize = 8 * 1024;
    let consumed = Rc::new(Cell::new(0));
    let file = CountingReader {
        inner: std::fs::File::open(&path).unwrap(),
        consumed: consumed.clone(),
    };
    let reader = ActivationReader::new(BufReader::with_capacity(BUFFER, file), manifest, &path);
    let mut count = 0;
    let mut max_lookahead = 0;
    for (i, record) in reader.enumerate() {
        let record = record.unwrap();
        assert_eq!(record.image_id, format!("img_{i:06}"));
        // nothing beyond one buffer past the current record has been read
        let lookahead = consumed.get() - line_ends[i];
        max_lookahead = max_lookahead.max(lookahead);
        assert!(lookahead <= BUFFER, "read {lookahead} bytes ahead at record {i}");
        count += 1;
    }
    assert_eq!(count, 20_000);
    assert!(max_lookahead > 0);
}

#[test]
fn activation_errors_carry_line_numbers() {
    let manifest = Arc::new(standard_manifest(16).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.tsv");
    let check = |text: &str, needle: &str| {
        std::fs::write(&path, text).unwrap();
        let err = io::stream_activations(&path, manifest.clone())
            .unwrap()
            .find_map(|r| r.err())
            .expect("an error");
        let msg = err.to_string();
        assert!(msg.contains(needle), "{msg}");
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
    };
    check(
        "i1\tc\t3a/1x1:0:1\ni2\tc\t3a/1x1:16:1\n",
        ":2: index 16 out of range for layer `3a/1x1`",
    );
    check("i1\tc\t3a/1x1:0:-1\n", ":1:");
    check("i1\tc\t9z/1x1:0:1\n", "9z/1x1");
}

#[test]
fn thousand_class_matrix_writes_quickly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels: Vec<String> = (0..1000).map(|i| format!("n{i:08}")).collect();
    let m = DistanceMatrix::from_fn(labels, |_, _| Ok(rng.random_range(0.0..1.0))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let start = Instant::now();
    io::write_distance_matrix_csv(&m, &path).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "write took {elapsed:?}");
    let back = io::load_distance_matrix_csv(&path).unwrap();
    assert_eq!(back.len(), 1000);
    let err = m
        .as_slice()
        .iter()
        .zip(back.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-8);
}
