//! File formats: CSV tables with JSON sidecars, raw little-endian f64
//! matrices for eigenvectors and chains.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Manifold, ManifoldKind, PointCloud};
use crate::graph::{GraphHeader, SparseLaplacian};
use crate::posterior::{Chain, PosteriorResult};
use crate::spectral::{EigenSystem, NORMALIZATION};

/// Round-trip formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{s}' as a number")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != 8 * expected {
        return Err(Error::Dimension {
            expected: 8 * expected,
            got: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudHeader {
    pub manifold: ManifoldKind,
    pub m: usize,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
}

/// One row per point with columns x0..x{d-1}.
pub fn write_cloud(cloud: &PointCloud, csv_path: &Path, json_path: &Path) -> Result<()> {
    let d = cloud.ambient_dim();
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record((0..d).map(|j| format!("x{j}")))?;
    for p in cloud.points() {
        w.write_record(p.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    let m = cloud.manifold();
    write_json(
        json_path,
        &CloudHeader {
            manifold: m.kind(),
            m: m.intrinsic_dim(),
            d,
            n: cloud.len(),
            seed: cloud.seed(),
        },
    )
}

pub fn read_cloud(csv_path: &Path, json_path: &Path) -> Result<PointCloud> {
    let header: CloudHeader = read_json(json_path)?;
    let manifold = Manifold::new(header.manifold, header.m)?;
    if manifold.ambient_dim() != header.d {
        return Err(Error::Dimension {
            expected: manifold.ambient_dim(),
            got: header.d,
        });
    }
    let mut coords = Vec::with_capacity(header.n * header.d);
    for rec in csv::Reader::from_path(csv_path)?.records() {
        let rec = rec?;
        if rec.len() != header.d {
            return Err(Error::Dimension {
                expected: header.d,
                got: rec.len(),
            });
        }
        for field in rec.iter() {
            coords.push(parse_f64(field)?);
        }
    }
    if coords.len() != header.n * header.d {
        return Err(Error::Dimension {
            expected: header.n,
            got: coords.len() / header.d,
        });
    }
    PointCloud::from_coords(manifold, coords, header.seed)
}

/// Laplacian as (i, j, value) triplets, diagonal included.
pub fn write_laplacian(lap: &SparseLaplacian, csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["i", "j", "value"])?;
    for (i, j, v) in lap.triplets() {
        w.write_record([i.to_string(), j.to_string(), fmt_f64(v)])?;
    }
    w.flush()?;
    write_json(json_path, &lap.header())
}

pub fn read_graph_header(json_path: &Path) -> Result<GraphHeader> {
    read_json(json_path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenHeader {
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub normalization: String,
}

/// Eigenvalues as CSV; eigenvectors as a column-major f64 file.
pub fn write_eigensystem(eig: &EigenSystem, values_csv: &Path, vectors_bin: &Path, json_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(values_csv)?;
    w.write_record(["index", "eigenvalue", "residual"])?;
    for (i, (l, r)) in eig.eigenvalues().iter().zip(eig.residuals()).enumerate() {
        w.write_record([i.to_string(), fmt_f64(*l), fmt_f64(*r)])?;
    }
    w.flush()?;
    write_f64_le(vectors_bin, eig.vectors())?;
    write_json(
        json_path,
        &EigenHeader {
            n: eig.n(),
            k: eig.k(),
            normalization: NORMALIZATION.into(),
        },
    )
}

pub fn read_eigensystem(values_csv: &Path, vectors_bin: &Path, json_path: &Path) -> Result<EigenSystem> {
    let header: EigenHeader = read_json(json_path)?;
    if header.normalization != NORMALIZATION {
        return Err(Error::Config(format!(
            "unsupported eigenvector normalization '{}'",
            header.normalization
        )));
    }
    let mut values = Vec::with_capacity(header.k);
    for rec in csv::Reader::from_path(values_csv)?.records() {
        values.push(parse_f64(&rec?[1])?);
    }
    let vectors = read_f64_le(vectors_bin, header.n * header.k)?;
    EigenSystem::from_parts(header.n, values, vectors)
}

/// Field values on the cloud: index, coordinates, value.
pub fn write_field(cloud: &PointCloud, values: &[f64], path: &Path) -> Result<()> {
    if values.len() != cloud.len() {
        return Err(Error::Dimension {
            expected: cloud.len(),
            got: values.len(),
        });
    }
    let d = cloud.ambient_dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["index".to_string()];
    head.extend((0..d).map(|j| format!("x{j}")));
    head.push("value".into());
    w.write_record(&head)?;
    for (i, (p, v)) in cloud.points().zip(values).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|&x| fmt_f64(x)));
        rec.push(fmt_f64(*v));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainHeader {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub beta_pcn: f64,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub samples: usize,
    pub k: usize,
}

/// Thinned chain as a row-major (samples × k) f64 file plus metadata.
pub fn write_chain(chain: &Chain, bin_path: &Path, json_path: &Path) -> Result<()> {
    write_f64_le(bin_path, &chain.samples)?;
    write_json(
        json_path,
        &ChainHeader {
            n_iter: chain.n_iter,
            burn_in: chain.burn_in,
            thin: chain.thin,
            beta_pcn: chain.beta_pcn,
            acceptance_rate: chain.acceptance_rate,
            seed: chain.seed,
            samples: chain.len(),
            k: chain.k,
        },
    )
}

pub fn read_chain(bin_path: &Path, json_path: &Path) -> Result<Chain> {
    let h: ChainHeader = read_json(json_path)?;
    Ok(Chain {
        samples: read_f64_le(bin_path, h.samples * h.k)?,
        k: h.k,
        n_iter: h.n_iter,
        burn_in: h.burn_in,
        thin: h.thin,
        beta_pcn: h.beta_pcn,
        acceptance_rate: h.acceptance_rate,
        seed: h.seed,
    })
}

/// Per-coefficient summary: index, mean and (exact case) posterior sd.
pub fn write_posterior_summary(result: &PosteriorResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "coef_mean", "coef_sd"])?;
    for (i, m) in result.coef_mean.iter().enumerate() {
        let sd = result
            .coef_cov
            .as_ref()
            .map(|c| fmt_f64(c[(i, i)].max(0.0).sqrt()))
            .unwrap_or_default();
        w.write_record([i.to_string(), fmt_f64(*m), sd])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform;

    #[test]
    fn cloud_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for m in [Manifold::sphere(), Manifold::torus(3).unwrap()] {
            let cloud = sample_uniform(&m, 50, 9).unwrap();
            let (c, j) = (dir.path().join("c.csv"), dir.path().join("c.json"));
            write_cloud(&cloud, &c, &j).unwrap();
            let back = read_cloud(&c, &j).unwrap();
            assert_eq!(back.coords(), cloud.coords());
            assert_eq!(back.seed(), 9);
            assert_eq!(back.manifold(), cloud.manifold());
        }
    }

    #[test]
    fn eigensystem_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let eig = EigenSystem::from_parts(3, vec![0.0, 0.5], vec![1.0, 1.0, 1.0, 1.2, 0.0, -1.2]).unwrap();
        let p = |s: &str| dir.path().join(s);
        write_eigensystem(&eig, &p("v.csv"), &p("v.bin"), &p("v.json")).unwrap();
        let back = read_eigensystem(&p("v.csv"), &p("v.bin"), &p("v.json")).unwrap();
        assert_eq!(back.eigenvalues(), eig.eigenvalues());
        assert_eq!(back.vectors(), eig.vectors());
        let h: EigenHeader = read_json(&p("v.json")).unwrap();
        assert_eq!(h.normalization, "L2(mu_N)");
        assert_eq!(std::fs::metadata(p("v.bin")).unwrap().len(), 48);
    }

    #[test]
    fn formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(parse_f64(&fmt_f64(x)).unwrap(), x);
        }
    }
}
