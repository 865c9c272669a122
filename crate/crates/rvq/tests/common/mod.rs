#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Once;

use rvq::format::{
    load_quantizer, load_snapshot, read_activation_dump, save_quantizer, save_snapshot, write_activation_dump, DType,
    PackedIndexBlock,
};
use rvq::FormatError;
use rvq_core::store::{Projection, QuantizedCacheStore};
use rvq_core::{Codebook, Grouping, IndexPacking, QuantizerGeometry, ResidualQuantizer};

/// Fixture directory; rewrites the fixtures first, once per process, when
/// `RVQ_REGEN_FIXTURES=1`.
pub fn fixture_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    static REGEN: Once = Once::new();
    REGEN.call_once(|| {
        if std::env::var("RVQ_REGEN_FIXTURES").as_deref() == Ok("1") {
            std::fs::create_dir_all(&dir).unwrap();
            for g in goldens() {
                (g.write)(&dir.join(g.name)).unwrap();
            }
        }
    });
    dir
}

pub fn fixture_quantizer() -> ResidualQuantizer {
    let g = QuantizerGeometry::new(8, 4, 2, 5).unwrap();
    let codebooks = (0..2)
        .map(|k| {
            let scale = if k == 0 { 1.0 } else { 0.25 };
            let values = (0..20).map(|i| scale * (((i * 7 + k * 3) % 11) as f32 - 5.0) / 4.0).collect();
            Codebook::new(4, values).unwrap()
        })
        .collect();
    ResidualQuantizer::new(g, Grouping::Strided, codebooks).unwrap()
}

pub fn fixture_vectors() -> Vec<Vec<f32>> {
    (0..6).map(|t| (0..8).map(|c| (((t * 13 + c * 5) % 17) as f32 - 8.0) * 0.375).collect()).collect()
}

pub fn fixture_block() -> PackedIndexBlock {
    let q = fixture_quantizer();
    let mut block = PackedIndexBlock::for_quantizer(&q, IndexPacking::Packed);
    for x in fixture_vectors() {
        block.push(&q.encode(&x).unwrap()).unwrap();
    }
    block
}

pub fn fixture_store() -> QuantizedCacheStore {
    let q = fixture_quantizer();
    let mut store = QuantizedCacheStore::new(IndexPacking::Packed);
    store.register(0, Projection::Key, q.clone()).unwrap();
    store.register(1, Projection::Value, q.with_grouping(Grouping::Contiguous)).unwrap();
    for (t, x) in fixture_vectors().iter().enumerate() {
        store.append(0, Projection::Key, x).unwrap();
        if t % 2 == 0 {
            store.append(1, Projection::Value, x).unwrap();
        }
    }
    store
}

/// One golden file per format: name, writer, loader-check.
pub struct Golden {
    pub name: &'static str,
    pub write: fn(&Path) -> Result<(), FormatError>,
    pub load: fn(&Path) -> Result<(), FormatError>,
}

fn load_dump(path: &Path) -> Result<(), FormatError> {
    let rows = read_activation_dump(path)?.collect::<Result<Vec<_>, _>>()?;
    assert_eq!(rows, fixture_vectors());
    Ok(())
}

pub fn goldens() -> [Golden; 4] {
    [
        Golden {
            name: "quantizer.rvqc",
            write: |p| save_quantizer(p, &fixture_quantizer()),
            load: |p| {
                assert_eq!(load_quantizer(p)?, fixture_quantizer());
                Ok(())
            },
        },
        Golden {
            name: "activations.rvqa",
            write: |p| write_activation_dump(p, 8, DType::F32, &fixture_vectors()).map(drop),
            load: load_dump,
        },
        Golden {
            name: "indices.rvqi",
            write: |p| fixture_block().save(p),
            load: |p| {
                assert_eq!(PackedIndexBlock::load(p)?, fixture_block());
                Ok(())
            },
        },
        Golden {
            name: "store.rvqs",
            write: |p| save_snapshot(p, &fixture_store()),
            load: |p| {
                let store = load_snapshot(p)?;
                let expected = fixture_store();
                assert_eq!(store.memory_report(), expected.memory_report());
                for (layer, projection, stream) in expected.streams() {
                    for t in 0..stream.len() {
                        assert_eq!(store.read(layer, projection, t)?, stream.read(t)?);
                    }
                }
                Ok(())
            },
        },
    ]
}
