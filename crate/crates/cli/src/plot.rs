//! Static SVG of min degree against iteration.

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

pub fn degree_growth_svg(title: &str, trace: &[(usize, i32)]) -> String {
    let imax = trace.iter().map(|(i, _)| *i).max().unwrap_or(1).max(1) as f64;
    let dmin = trace.iter().map(|(_, d)| *d).min().unwrap_or(-1).min(-1) as f64;
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / imax;
    let y = |d: i32| PAD + (H - 2.0 * PAD) * d as f64 / dmin;
    let pts: Vec<String> = trace.iter().map(|(i, d)| format!("{:.1},{:.1}", x(*i), y(*d))).collect();
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{:.1}\" y2=\"{PAD}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">iteration</text>\n\
         <text x=\"4\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{dmin}</text>\n",
        escape(title),
        W - PAD,
        H - PAD,
        W / 2.0 - 20.0,
        H - 10.0,
        H - PAD,
    );
    s.push_str(&format!("<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n", pts.join(" ")));
    for p in &pts {
        let (a, b) = p.split_once(',').unwrap();
        s.push_str(&format!("<circle cx=\"{a}\" cy=\"{b}\" r=\"3\" fill=\"steelblue\"/>\n"));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
