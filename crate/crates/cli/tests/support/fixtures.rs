//! Committed fixture inputs and goldens. `COS_BLESS=1` rewrites them.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cos_core::dataset::{write_dump, write_records_file, AnnotatedRecord, Provenance};
use cos_core::geometry::{write_raster, Raster};
use cos_core::prompt::build_conversation;
use cos_core::relevance::{Aggregation, InterpreterMode};
use cos_core::roi::RoiBox;
use cos_core::synthetic::{weighted_target_dump, DumpShape};
use serde_json::Value;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn blessing() -> bool {
    std::env::var_os("COS_BLESS").is_some_and(|v| v == "1")
}

pub fn cos(args: &[&str], cwd: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cos"));
    cmd.args(args);
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    cmd.output().expect("cos binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

struct Image {
    id: &'static str,
    path: Option<&'static str>,
    width: u32,
    height: u32,
    regions: &'static [[f64; 4]],
    shape: DumpShape,
}

const fn shape(n_layers: usize, n_heads: usize, n_regions: usize, n_text: usize) -> DumpShape {
    DumpShape {
        n_layers,
        n_heads,
        n_regions,
        n_text,
        d_h: 8,
    }
}

const IMAGES: [Image; 3] = [
    Image {
        id: "img_a",
        path: Some("images/img_a.png"),
        width: 640,
        height: 480,
        regions: &[
            [0.05, 0.40, 0.20, 0.60],
            [0.30, 0.70, 0.15, 0.45],
            [0.55, 0.95, 0.50, 0.85],
        ],
        shape: shape(2, 2, 3, 4),
    },
    Image {
        id: "img_b",
        path: Some("images/img_b.png"),
        width: 500,
        height: 500,
        regions: &[
            [0.10, 0.30, 0.10, 0.30],
            [0.40, 0.90, 0.05, 0.50],
            [0.20, 0.60, 0.60, 0.95],
            [0.00, 1.00, 0.00, 1.00],
        ],
        shape: shape(3, 4, 4, 5),
    },
    Image {
        id: "img_c",
        path: None,
        width: 300,
        height: 600,
        regions: &[[0.30, 0.70, 0.10, 0.50], [0.26, 0.50, 0.55, 0.90]],
        shape: shape(1, 1, 2, 3),
    },
];

/// (image, explicit question id, question, answer, region weights); file
/// order interleaves images.
type QaSpec = (
    usize,
    Option<&'static str>,
    &'static str,
    &'static str,
    &'static [f64],
);

const QA: [QaSpec; 6] = [
    (
        0,
        None,
        "What is the dog holding?",
        "A frisbee.",
        &[0.2, 0.1, 3.0],
    ),
    (2, None, "Is the lamp on?", "Yes.", &[1.0, 0.1]),
    (
        1,
        Some("q-17"),
        "How many people are on the bench?",
        "Two.",
        &[0.1, 4.0, 0.2, 1.5],
    ),
    (0, None, "What color is the car?", "Red.", &[2.5, 0.3, 0.1]),
    (2, None, "What is on the shelf?", "Books.", &[0.2, 1.0]),
    (2, None, "Where is the cat?", "On the chair.", &[0.6, 0.5]),
];

pub struct AnnotateFixture {
    pub dir: PathBuf,
    pub dumps: PathBuf,
    pub regions: PathBuf,
    pub qa: PathBuf,
    pub golden: PathBuf,
}

pub fn annotate_fixture() -> AnnotateFixture {
    let dir = root().join("annotate");
    AnnotateFixture {
        dumps: dir.join("dumps"),
        regions: dir.join("regions.json"),
        qa: dir.join("qa.jsonl"),
        golden: dir.join("golden.jsonl"),
        dir,
    }
}

/// The catalog box of the region with the largest gradient weight for
/// `question`.
pub fn dominant_region(question: &str) -> Option<[f64; 4]> {
    let (img, _, _, _, weights) = QA.iter().find(|q| q.2 == question)?;
    let best = (0..weights.len()).max_by(|a, b| weights[*a].total_cmp(&weights[*b]))?;
    Some(IMAGES[*img].regions[best])
}

fn bless_annotate_inputs(f: &AnnotateFixture) {
    let _ = fs::remove_dir_all(&f.dumps);
    fs::create_dir_all(&f.dumps).unwrap();

    let catalogs: Vec<Value> = IMAGES
        .iter()
        .map(|img| {
            let mut c = serde_json::json!({
                "image_id": img.id,
                "width": img.width,
                "height": img.height,
                "regions": img.regions,
            });
            if let Some(p) = img.path {
                c["image_path"] = p.into();
            }
            c
        })
        .collect();
    fs::write(
        &f.regions,
        serde_json::to_string_pretty(&catalogs).unwrap() + "\n",
    )
    .unwrap();

    let mut qa_lines = String::new();
    let mut ordinal = [0usize; 3];
    for (seed, (img, qid, question, answer, weights)) in QA.iter().enumerate() {
        let image = &IMAGES[*img];
        let question_id = qid.map_or_else(|| ordinal[*img].to_string(), str::to_owned);
        ordinal[*img] += 1;
        let mut line = serde_json::json!({
            "image_id": image.id,
            "question": question,
            "answer": answer,
        });
        if let Some(q) = qid {
            line["question_id"] = (*q).into();
        }
        qa_lines.push_str(&line.to_string());
        qa_lines.push('\n');

        let mut dump = weighted_target_dump(1000 + seed as u64, image.shape, weights);
        dump.meta.image_id = image.id.into();
        dump.meta.question_id = question_id.clone();
        write_dump(
            &dump,
            &f.dumps.join(format!("{}__{question_id}.cosattn", image.id)),
        )
        .unwrap();
    }
    fs::write(&f.qa, qa_lines).unwrap();
}

pub struct InferCase {
    pub name: &'static str,
    pub script: &'static [&'static str],
}

pub const QUESTION: &str = "What animals are on the sofa?";
pub const INFER_RESOLUTION: usize = 64;

pub const INFER_CASES: [InferCase; 3] = [
    InferCase {
        name: "box",
        script: &["[0.250, 0.750, 0.125, 0.875]", "Two cats are sleeping."],
    },
    InferCase {
        name: "nobox",
        script: &["The region is near the top left corner.", "A lamp."],
    },
    InferCase {
        name: "invalid",
        script: &["Sure: [0.800, 0.200, 0.100, 0.500]", "Unclear."],
    },
];

pub fn infer_dir() -> PathBuf {
    root().join("infer")
}

pub fn scene() -> Raster {
    let (w, h) = (48usize, 32usize);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            data.extend([(x * 5) as u8, (y * 7) as u8, ((x + y) * 3 % 256) as u8]);
        }
    }
    Raster::new(w, h, 3, data).unwrap()
}

/// Runs `cos infer` on one scripted case in a scratch directory and
/// returns the transcript with timing removed.
pub fn run_infer(case: &InferCase, scratch: &Path) -> Result<Value, String> {
    let dir = infer_dir();
    fs::copy(dir.join("scene.ppm"), scratch.join("scene.ppm")).map_err(|e| e.to_string())?;
    let script = format!("{}.jsonl", case.name);
    fs::copy(dir.join(&script), scratch.join(&script)).map_err(|e| e.to_string())?;
    let res = INFER_RESOLUTION.to_string();
    let out = cos(
        &[
            "infer",
            "--image",
            "scene.ppm",
            "--question",
            QUESTION,
            "--mock",
            &script,
            "--roi-out",
            "roi.png",
            "--resolution",
            &res,
        ],
        Some(scratch),
    );
    if !out.status.success() {
        return Err(format!(
            "infer {} exited {:?}: {}",
            case.name,
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let mut v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    v.as_object_mut()
        .ok_or("transcript is not an object")?
        .remove("timing")
        .ok_or("transcript has no timing")?;
    Ok(v)
}

fn bless_infer() {
    let dir = infer_dir();
    fs::create_dir_all(&dir).unwrap();
    write_raster(&dir.join("scene.ppm"), &scene()).unwrap();
    for case in &INFER_CASES {
        let lines: String = case
            .script
            .iter()
            .map(|t| serde_json::json!({ "text": t }).to_string() + "\n")
            .collect();
        fs::write(dir.join(format!("{}.jsonl", case.name)), lines).unwrap();
        let scratch = tempfile::tempdir().unwrap();
        let transcript = run_infer(case, scratch.path()).unwrap();
        fs::write(
            dir.join(format!("golden_{}.json", case.name)),
            serde_json::to_string_pretty(&transcript).unwrap() + "\n",
        )
        .unwrap();
    }
}

pub fn stats_dir() -> PathBuf {
    root().join("stats")
}

pub fn quarter_records() -> Vec<AnnotatedRecord> {
    let roi = RoiBox::new(0.25, 0.75, 0.25, 0.75).unwrap();
    [
        "What is this?",
        "Who is there?",
        "Is it raining?",
        "How many birds?",
    ]
    .iter()
    .enumerate()
    .map(|(i, q)| AnnotatedRecord {
        image_id: format!("quarter_{i}"),
        image_path: format!("quarter_{i}.png"),
        question: (*q).into(),
        answer: "Unknown.".into(),
        roi,
        conversation: build_conversation(q, &roi, "Unknown.").unwrap(),
        provenance: Provenance {
            epsilon: 0.5,
            margin: 0.05,
            aggregation: Aggregation::Mean,
            interpreter: InterpreterMode::ClampProduct,
            dump_sha256: "0".repeat(64),
            seed: Some(42),
            epoch: Some(0),
        },
    })
    .collect()
}

fn bless_stats(golden_records: &Path) {
    let dir = stats_dir();
    fs::create_dir_all(&dir).unwrap();
    write_records_file(&quarter_records(), &dir.join("quarter.jsonl")).unwrap();
    let pgm = dir.join("golden.pgm");
    let out = cos(
        &[
            "stats",
            "--records",
            path_str(golden_records),
            "--pgm",
            path_str(&pgm),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Regenerates every fixture input, then the goldens from the current build.
pub fn bless() {
    let f = annotate_fixture();
    bless_annotate_inputs(&f);
    let out = cos(
        &[
            "annotate",
            "--dumps",
            path_str(&f.dumps),
            "--regions",
            path_str(&f.regions),
            "--qa",
            path_str(&f.qa),
            "--out",
            path_str(&f.golden),
            "--jobs",
            "1",
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    bless_infer();
    bless_stats(&f.golden);
}
