use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use sha2::{Digest, Sha256};

use super::parallel::parallel_map;
use super::raw::{load_tensor, save_tensor, Metadata};
use crate::error::{Error, Result};
use crate::physics::Simulator;
use crate::tensor::Tensor;
use crate::tomography::{Geometry, Mask};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKSUM_FILE: &str = "checksums.sha256";
const CASE_DIR: &str = "cases";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}` (train|val|test)"))),
        }
    }
}

/// Sizes and base seed of a generated dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_train: 400,
            n_val: 50,
            n_test: 50,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }

    /// Simulation seed of the `global`-th case. Cases never share a seed, so
    /// splits are disjoint.
    pub fn case_seed(&self, global: usize) -> u64 {
        self.seed.wrapping_mul(1_000_000).wrapping_add(global as u64)
    }
}

/// One case of the manifest; paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseRecord {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub i_c: String,
    pub i_a: String,
    pub i_ac: String,
    pub mask: String,
}

impl CaseRecord {
    pub fn name(&self) -> String {
        format!("{}_{:04}", self.split, self.index)
    }

    fn files(&self) -> [&str; 4] {
        [&self.i_c, &self.i_a, &self.i_ac, &self.mask]
    }
}

/// Images of one case in attenuation units (mm⁻¹).
#[derive(Clone, Debug)]
pub struct CaseImages {
    pub i_c: Tensor,
    pub i_a: Tensor,
    pub i_ac: Tensor,
    pub mask: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub geometry: Geometry,
    /// Effective water attenuation used as the HU reference.
    pub mu_water: f64,
    pub records: Vec<CaseRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &CaseRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut out = String::from("# marforge dataset manifest\n");
        for (k, v) in [
            ("seed", self.spec.seed.to_string()),
            ("n_train", self.spec.n_train.to_string()),
            ("n_val", self.spec.n_val.to_string()),
            ("n_test", self.spec.n_test.to_string()),
            ("image_size", g.image_size.to_string()),
            ("pixel_spacing", g.pixel_spacing.to_string()),
            ("n_angles", g.n_angles.to_string()),
            ("n_bins", g.n_bins.to_string()),
            ("bin_spacing", g.bin_spacing.to_string()),
            ("mu_water", format!("{:e}", self.mu_water)),
        ] {
            out.push_str(&format!("{k}={v}\n"));
        }
        out.push_str("# case split index seed i_c i_a i_ac mask\n");
        for r in &self.records {
            out.push_str(&format!(
                "case {} {} {} {} {} {} {}\n",
                r.split, r.index, r.seed, r.i_c, r.i_a, r.i_ac, r.mask
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut records = Vec::new();
        let bad = |line: usize, msg: String| Error::format("manifest", format!("line {line}: {msg}"));
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("case ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 7 {
                    return Err(bad(i + 1, format!("expected 7 case fields, found {}", f.len())));
                }
                records.push(CaseRecord {
                    split: f[0].parse()?,
                    index: f[1].parse().map_err(|_| bad(i + 1, "bad index".into()))?,
                    seed: f[2].parse().map_err(|_| bad(i + 1, "bad seed".into()))?,
                    i_c: f[3].to_owned(),
                    i_a: f[4].to_owned(),
                    i_ac: f[5].to_owned(),
                    mask: f[6].to_owned(),
                });
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.trim().to_owned(), v.trim().to_owned());
            } else {
                return Err(bad(i + 1, format!("unrecognised line `{line}`")));
            }
        }
        fn field<T: FromStr>(h: &std::collections::BTreeMap<String, String>, k: &str) -> Result<T> {
            h.get(k)
                .ok_or_else(|| Error::format("manifest", format!("missing `{k}`")))?
                .parse()
                .map_err(|_| Error::format("manifest", format!("bad value for `{k}`")))
        }
        let geometry = Geometry::new(
            field(&header, "image_size")?,
            field(&header, "pixel_spacing")?,
            field(&header, "n_angles")?,
            field(&header, "n_bins")?,
            field(&header, "bin_spacing")?,
        )?;
        let manifest = DatasetManifest {
            spec: DatasetSpec {
                n_train: field(&header, "n_train")?,
                n_val: field(&header, "n_val")?,
                n_test: field(&header, "n_test")?,
                seed: field(&header, "seed")?,
            },
            geometry,
            mu_water: field(&header, "mu_water")?,
            records,
        };
        manifest.check_disjoint()?;
        Ok(manifest)
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if !seen.insert(r.seed) {
                return Err(Error::format(
                    "manifest",
                    format!("case seed {} appears more than once", r.seed),
                ));
            }
        }
        Ok(())
    }
}

/// A manifest bound to the directory that holds its files.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Reads the manifest and checks that every referenced file exists.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = DatasetManifest::parse(&fs::read_to_string(root.join(MANIFEST_FILE))?)?;
        for r in &manifest.records {
            for f in r.files() {
                if !root.join(f).is_file() {
                    return Err(Error::format(
                        "dataset",
                        format!("case {} references missing file {f}", r.name()),
                    ));
                }
            }
        }
        Ok(Dataset { root, manifest })
    }

    pub fn load_case(&self, record: &CaseRecord) -> Result<CaseImages> {
        let load = |f: &str| load_tensor(self.root.join(f));
        Ok(CaseImages {
            i_c: load(&record.i_c)?,
            i_a: load(&record.i_a)?,
            i_ac: load(&record.i_ac)?,
            mask: Mask::from_tensor(&load(&record.mask)?)?,
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<(CaseRecord, CaseImages)>> {
        self.manifest
            .split(split)
            .map(|r| Ok((r.clone(), self.load_case(r)?)))
            .collect()
    }
}

/// `sha256sum`-style listing of every data file, sorted by path.
pub fn checksums(root: &Path, manifest: &DatasetManifest) -> Result<String> {
    let mut files: Vec<String> = vec![MANIFEST_FILE.to_owned()];
    for r in &manifest.records {
        files.extend(r.files().iter().map(|s| s.to_string()));
    }
    files.sort();
    let mut out = String::new();
    for f in files {
        let digest = Sha256::digest(fs::read(root.join(&f))?);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        out.push_str(&format!("{hex}  {f}\n"));
    }
    Ok(out)
}

/// Simulates every case of `spec` into `out`.
///
/// Refuses to write into a non-empty directory unless `force` is set, in
/// which case the previous manifest, checksums and case files are replaced.
pub fn build_dataset(
    out: impl AsRef<Path>,
    spec: &DatasetSpec,
    sim: &Simulator,
    force: bool,
) -> Result<DatasetManifest> {
    let out = out.as_ref();
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        if !force {
            return Err(Error::AlreadyExists(out.display().to_string()));
        }
        for f in [MANIFEST_FILE, CHECKSUM_FILE] {
            if out.join(f).exists() {
                fs::remove_file(out.join(f))?;
            }
        }
        if out.join(CASE_DIR).exists() {
            fs::remove_dir_all(out.join(CASE_DIR))?;
        }
    }
    fs::create_dir_all(out.join(CASE_DIR))?;

    let mut jobs = Vec::new();
    for split in Split::ALL {
        for index in 0..spec.count(split) {
            let global = jobs.len();
            jobs.push((split, index, spec.case_seed(global)));
        }
    }
    let mu_water = sim.mu_water();
    info!("simulating {} cases into {}", jobs.len(), out.display());
    let results = parallel_map(jobs.len(), |j| -> Result<CaseRecord> {
        let (split, index, seed) = jobs[j];
        let case = sim.simulate_case(seed)?;
        let stem = format!("{CASE_DIR}/{split}_{index:04}");
        let record = CaseRecord {
            split,
            index,
            seed,
            i_c: format!("{stem}_ic.mari"),
            i_a: format!("{stem}_ia.mari"),
            i_ac: format!("{stem}_iac.mari"),
            mask: format!("{stem}_mask.mari"),
        };
        let meta = |kind: &str| {
            Metadata::new()
                .with("kind", kind)
                .with("units", "mm^-1")
                .with("mu_water", format!("{mu_water:e}"))
                .with("seed", seed)
        };
        save_tensor(out.join(&record.i_c), &case.i_c, &meta("clean"))?;
        save_tensor(out.join(&record.i_a), &case.i_a, &meta("metal-affected"))?;
        save_tensor(out.join(&record.i_ac), &case.i_ac, &meta("metal-free reference"))?;
        let mask_meta = Metadata::new().with("kind", "metal mask").with("units", "binary").with("seed", seed);
        save_tensor(out.join(&record.mask), &case.mask.to_tensor(), &mask_meta)?;
        Ok(record)
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        spec: *spec,
        geometry: *sim.geometry(),
        mu_water,
        records,
    };
    fs::write(out.join(MANIFEST_FILE), manifest.to_text())?;
    fs::write(out.join(CHECKSUM_FILE), checksums(out, &manifest)?)?;
    Ok(manifest)
}
