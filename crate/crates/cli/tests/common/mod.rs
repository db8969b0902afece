#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use mono3d::{Command, RunConfig};

pub const CAR_LINE: &str = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59";

/// Hand-counted tiers, in file order:
/// 000000: Car moderate (27 px), Car easy (103 px), DontCare
/// 000001: Car hard (trunc 0.4, occ 2), Pedestrian easy
/// 000002: Car ignored (20 px), Car easy (trunc 0.1)
pub const FRAMES: [(&str, &str); 3] = [
    (
        "000000",
        "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n\
         Car 0.00 0 1.55 614.24 181.78 727.31 284.77 1.57 1.73 4.15 1.00 1.75 13.22 1.62\n\
         DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n",
    ),
    (
        "000001",
        "Car 0.40 2 -1.20 100.00 180.00 160.00 210.00 1.50 1.60 3.90 -8.00 1.70 25.00 -1.50\n\
         Pedestrian 0.00 0 0.20 700.00 150.00 740.00 250.00 1.80 0.60 0.80 2.00 1.70 10.00 0.30\n",
    ),
    (
        "000002",
        "Car 0.00 0 0.10 400.00 180.00 440.00 200.00 1.50 1.60 3.90 5.00 1.70 60.00 0.10\n\
         Car 0.10 0 0.00 500.00 170.00 600.00 230.00 1.50 1.60 3.90 -3.00 1.70 18.00 0.05\n",
    ),
];

pub const CALIB: &str = "P0: 721.5377 0 609.5593 0 0 721.5377 172.854 0 0 0 1 0\n\
P1: 721.5377 0 609.5593 -387.5744 0 721.5377 172.854 0 0 0 1 0\n\
P2: 721.5377 0 609.5593 44.85728 0 721.5377 172.854 0.2163791 0 0 1 0.002745884\n\
P3: 721.5377 0 609.5593 -339.5242 0 721.5377 172.854 2.199936 0 0 1 0.002729905\n";

pub struct Corpus {
    pub root: tempfile::TempDir,
}

impl Corpus {
    pub fn gt(&self) -> PathBuf {
        self.root.path().join("label_2")
    }
    pub fn pred(&self) -> PathBuf {
        self.root.path().join("pred")
    }
    pub fn calib(&self) -> PathBuf {
        self.root.path().join("calib")
    }
    pub fn out(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    pub fn write_pred(&self, id: &str, text: &str) {
        fs::write(self.pred().join(format!("{id}.txt")), text).unwrap();
    }

    pub fn config(&self, command: Command, out: &str) -> RunConfig {
        let mut cfg = RunConfig::new(command);
        cfg.gt_dir = Some(self.gt());
        cfg.pred_dir = Some(self.pred());
        cfg.calib_dir = Some(self.calib());
        cfg.out = self.out(out);
        cfg
    }
}

/// Ground truth and calibration for the three frames; an empty prediction directory.
pub fn corpus() -> Corpus {
    let root = tempfile::tempdir().unwrap();
    for sub in ["label_2", "pred", "calib"] {
        fs::create_dir(root.path().join(sub)).unwrap();
    }
    for (id, text) in FRAMES {
        fs::write(root.path().join("label_2").join(format!("{id}.txt")), text).unwrap();
        fs::write(root.path().join("calib").join(format!("{id}.txt")), CALIB).unwrap();
    }
    Corpus { root }
}

/// Every ground-truth row of a frame turned into a prediction with `score`.
pub fn as_predictions(gt: &str, score: f64) -> String {
    gt.lines().map(|l| format!("{} {score}\n", l.trim())).collect()
}

pub fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
