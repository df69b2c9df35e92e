//! `nlgames table`: concatenates result CSVs, tagging rows with their source.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

/// Merged CSV with a leading `source` column (the input's file stem). All
/// inputs must share one header.
pub fn merge(inputs: &[PathBuf]) -> anyhow::Result<String> {
    let mut header: Option<csv::StringRecord> = None;
    let mut w = csv::Writer::from_writer(Vec::new());
    for path in inputs {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let h = r.headers()?.clone();
        match &header {
            None => {
                let mut first = csv::StringRecord::from(vec!["source"]);
                first.extend(h.iter());
                w.write_record(&first)?;
                header = Some(h);
            }
            Some(prev) if prev != &h => bail!("{} has columns {:?}, expected {:?}", path.display(), h, prev),
            Some(_) => {}
        }
        let tag = stem(path);
        for rec in r.records() {
            let rec = rec?;
            let mut row = csv::StringRecord::from(vec![tag.as_str()]);
            row.extend(rec.iter());
            w.write_record(&row)?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
