//! Minimal SVG plot of fast and slow envelopes in the ΔP-ΔQ plane.

use std::fmt::Write as _;

/// `polygons` are `(label, colour, vertices in kW/kvar)`.
pub fn envelope_svg(title: &str, polygons: &[(&str, &str, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 480.0;
    const PAD: f64 = 48.0;
    let mut span: f64 = 1.0;
    for (_, _, v) in polygons {
        for (p, q) in v {
            span = span.max(p.abs()).max(q.abs());
        }
    }
    let span = span * 1.1;
    let x = |p: f64| PAD + (p + span) / (2.0 * span) * (W - 2.0 * PAD);
    let y = |q: f64| W - PAD - (q + span) / (2.0 * span) * (W - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{W}" viewBox="0 0 {W} {W}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{W}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, y0) = (x(0.0), y(0.0));
    let _ = writeln!(s, r##"<line x1="{PAD}" y1="{y0:.2}" x2="{}" y2="{y0:.2}" stroke="#888"/>"##, W - PAD);
    let _ = writeln!(s, r##"<line x1="{x0:.2}" y1="{PAD}" x2="{x0:.2}" y2="{}" stroke="#888"/>"##, W - PAD);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">ΔP [kW]</text>"#,
        W - PAD,
        y0 - 6.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">ΔQ [kvar]</text>"#,
        x0 + 6.0,
        PAD - 6.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">±{span:.1}</text>"#,
        W - PAD,
        W - PAD + 16.0
    );
    for (i, (label, colour, v)) in polygons.iter().enumerate() {
        let pts: Vec<String> = v.iter().map(|(p, q)| format!("{:.2},{:.2}", x(*p), y(*q))).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{colour}" fill-opacity="0.25" stroke="{colour}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/>"#, PAD, ly);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            PAD + 14.0,
            ly + 9.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
