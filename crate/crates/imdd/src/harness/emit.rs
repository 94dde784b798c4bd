//! Result emission: CSV records and a log-BER versus distance SVG.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One evaluated operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub system: String,
    pub distance_km: f64,
    pub eta: usize,
    pub bler: f64,
    pub ber: f64,
    pub ber_lower_bound: Option<f64>,
    pub labeling: String,
    pub weights: String,
    pub flops_pdb: f64,
    pub seed: u64,
}

impl ResultRow {
    /// Stable emission order.
    fn sort_key(&self) -> (String, usize, u64, String, String, u64) {
        (
            self.system.clone(),
            self.eta,
            self.distance_km.to_bits(),
            self.labeling.clone(),
            self.weights.clone(),
            self.seed,
        )
    }
}

/// Serializes rows (sorted into a stable order) with a header line and
/// a leading `# config <hash>` comment.
pub fn result_csv_bytes(rows: &[ResultRow], config_hash: &str) -> Result<Vec<u8>> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.sort_key());
    let mut out = Vec::new();
    out.extend_from_slice(format!("# config {config_hash}\n").as_bytes());
    let mut writer = csv::Writer::from_writer(&mut out);
    for row in &sorted {
        writer.serialize(row).map_err(|e| Error::format(format!("csv write: {e}")))?;
    }
    writer.flush()?;
    drop(writer);
    Ok(out)
}

/// Parses a result CSV (comment lines ignored).
pub fn parse_result_csv(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record.map_err(|e| Error::format(format!("csv parse: {e}")))?);
    }
    Ok(rows)
}

const PLOT_W: f64 = 860.0;
const PLOT_H: f64 = 560.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 230.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

const SERIES_COLORS: [&str; 8] = [
    "#7a1f2b", "#1f4e79", "#2e7d32", "#b26a00", "#6a1b9a", "#00695c", "#c62828", "#37474f",
];

/// Log-BER versus distance plot: one polyline per distinct
/// (system, eta, labeling, weights) series, plus the HD-FEC reference
/// line at the configured threshold. Zero-BER points are drawn at the
/// floor of the axis.
pub fn plot_ber_svg(rows: &[ResultRow], hd_fec_ber: Option<f64>, config_hash: &str) -> String {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.sort_key());
    for row in &sorted {
        let key = format!(
            "{} eta={} {}/{}",
            row.system, row.eta, row.labeling, row.weights
        );
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((row.distance_km, row.ber)),
            None => series.push((key, vec![(row.distance_km, row.ber)])),
        }
    }
    for (_, pts) in &mut series {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let x_min = rows.iter().map(|r| r.distance_km).fold(f64::INFINITY, f64::min).min(0.0);
    let x_max = rows.iter().map(|r| r.distance_km).fold(1.0, f64::max);
    let positive_bers: Vec<f64> =
        rows.iter().map(|r| r.ber).filter(|&b| b > 0.0).collect();
    let y_floor_exp = positive_bers
        .iter()
        .map(|b| b.log10().floor())
        .fold(-1.0, f64::min)
        .min(hd_fec_ber.map(|f| f.log10().floor()).unwrap_or(0.0))
        - 1.0;
    let y_top_exp = 0.0;

    let x_pos = |x: f64| {
        MARGIN_L + (x - x_min) / (x_max - x_min).max(1e-12) * (PLOT_W - MARGIN_L - MARGIN_R)
    };
    let y_pos = |ber: f64| {
        let e = if ber > 0.0 { ber.log10() } else { y_floor_exp };
        let clamped = e.clamp(y_floor_exp, y_top_exp);
        MARGIN_T + (y_top_exp - clamped) / (y_top_exp - y_floor_exp) * (PLOT_H - MARGIN_T - MARGIN_B)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
         viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n"
    ));
    svg.push_str(&format!("<!-- config {config_hash} -->\n"));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Axes.
    let x0 = MARGIN_L;
    let x1 = PLOT_W - MARGIN_R;
    let y0 = PLOT_H - MARGIN_B;
    let y1 = MARGIN_T;
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">distance [km]</text>\n",
        (x0 + x1) / 2.0,
        PLOT_H - 15.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">BER</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));

    // Y decade ticks.
    let mut exp = y_top_exp;
    while exp >= y_floor_exp - 1e-9 {
        let y = y_pos(10f64.powf(exp));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n",
            x0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">1e{exp:.0}</text>\n",
            x0 - 6.0,
            y + 4.0
        ));
        exp -= 1.0;
    }
    // X ticks at the observed distances.
    let mut xticks: Vec<f64> = rows.iter().map(|r| r.distance_km).collect();
    xticks.sort_by(f64::total_cmp);
    xticks.dedup();
    for x in &xticks {
        let xp = x_pos(*x);
        svg.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{y0}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{xp}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x}</text>\n",
            y0 + 20.0
        ));
    }

    // HD-FEC reference line.
    if let Some(fec) = hd_fec_ber {
        let y = y_pos(fec);
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#555555\" \
             stroke-dasharray=\"8 5\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#555555\">HD-FEC {fec:e}</text>\n",
            x0 + 8.0,
            y - 6.0
        ));
    }

    // Series.
    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = SERIES_COLORS[idx % SERIES_COLORS.len()];
        let points: Vec<String> =
            pts.iter().map(|(x, b)| format!("{:.2},{:.2}", x_pos(*x), y_pos(*b))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        for (x, b) in pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                x_pos(*x),
                y_pos(*b)
            ));
        }
        let ly = MARGIN_T + 16.0 * idx as f64 + 10.0;
        let lx = PLOT_W - MARGIN_R + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            lx + 22.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{name}</text>\n",
            lx + 28.0,
            ly + 4.0
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
