//! Gnuplot-friendly emission of sweep results: a data file with one block
//! per experiment plus a script stub. No rendering here; the artifacts
//! are meant for `gnuplot <base>.gp` or any other plotting tool.

use std::path::Path;

use fpwm_core::mc_harness::SweepRow;
use fpwm_core::Error;

/// Writes `<base>.dat` (columns: mu_a, theory, mc_mean, mc_stderr,
/// threshold; blocks separated by blank lines, one per experiment) and a
/// companion `<base>.gp` stub.
pub fn emit_plotdata(rows: &[SweepRow], base: &Path) -> Result<(), Error> {
    if rows.is_empty() {
        return Err(Error::Estimation("no rows to plot".into()));
    }

    let mut blocks: Vec<(&str, Vec<&SweepRow>)> = Vec::new();
    for row in rows {
        match blocks.last_mut() {
            Some((name, block)) if *name == row.experiment => block.push(row),
            _ => blocks.push((&row.experiment, vec![row])),
        }
    }

    let mut dat = String::from("# mu_a theory mc_mean mc_stderr threshold\n");
    for (name, block) in &blocks {
        dat.push_str(&format!("# experiment: {name}\n"));
        let mut sorted: Vec<&&SweepRow> = block.iter().collect();
        sorted.sort_by(|a, b| a.mu_a.total_cmp(&b.mu_a));
        for row in sorted {
            dat.push_str(&format!(
                "{} {} {} {} {}\n",
                row.mu_a,
                row.qos,
                row.beta_mc_mean.map(|v| v.to_string()).unwrap_or_else(|| "nan".into()),
                row.beta_mc_stderr.map(|v| v.to_string()).unwrap_or_else(|| "nan".into()),
                row.threshold
            ));
        }
        dat.push_str("\n\n");
    }
    let dat_path = base.with_extension("dat");
    std::fs::write(&dat_path, &dat)
        .map_err(|e| Error::Parse(format!("writing {}: {e}", dat_path.display())))?;

    let mut gp = String::new();
    gp.push_str("set xlabel 'mu_a'\nset ylabel 'limit proportion of fake tags'\nset key outside\n");
    gp.push_str(&format!(
        "datafile = '{}'\nplot \\\n",
        dat_path.file_name().unwrap().to_string_lossy()
    ));
    let mut lines = Vec::new();
    for (i, (name, _)) in blocks.iter().enumerate() {
        lines.push(format!(
            "  datafile index {i} using 1:2 with linespoints title '{name} (theory)', \\\n  \
             datafile index {i} using 1:3:4 with yerrorbars title '{name} (MC)'"
        ));
    }
    lines.push(
        "  datafile index 0 using 1:5 with lines dashtype 2 title 'threshold'".to_string(),
    );
    gp.push_str(&lines.join(", \\\n"));
    gp.push('\n');
    let gp_path = base.with_extension("gp");
    std::fs::write(&gp_path, &gp)
        .map_err(|e| Error::Parse(format!("writing {}: {e}", gp_path.display())))?;
    Ok(())
}
