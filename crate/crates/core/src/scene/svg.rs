//! Reference SVG rendering of one scene: a 5x5 grid of 64-unit cells.

use std::fmt::Write;

use crate::model::{ElementKind, SceneDocument, SceneElement, GRID_SIZE};

pub const CELL: u32 = 64;
pub const SIZE: u32 = CELL * GRID_SIZE as u32;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn element(out: &mut String, e: &SceneElement, x: u32, y: u32) {
    let cx = x + CELL / 2;
    let kind = e.kind.as_str();
    let _ = writeln!(out, r#"  <g class="element {kind}" data-id="{}">"#, escape(&e.id));
    match e.kind {
        ElementKind::Actor => {
            let _ = writeln!(out, r#"    <circle cx="{cx}" cy="{}" r="14"/>"#, y + 24);
        }
        ElementKind::Object => {
            let _ = writeln!(out, r#"    <rect x="{}" y="{}" width="28" height="28"/>"#, cx - 14, y + 10);
        }
        ElementKind::Concept => {
            let _ = writeln!(
                out,
                r#"    <polygon points="{cx},{} {},{} {cx},{} {},{}"/>"#,
                y + 8,
                cx + 16,
                y + 24,
                y + 40,
                cx - 16,
                y + 24
            );
        }
    }
    let _ = writeln!(out, r#"    <text class="label" x="{cx}" y="{}">{}</text>"#, y + 52, escape(&e.label));
    if let Some(emotion) = e.emotion {
        let _ = writeln!(
            out,
            r#"    <text class="emotion" x="{}" y="{}">{}</text>"#,
            x + CELL - 4,
            y + 10,
            emotion.label()
        );
    }
    if let Some(line) = &e.dialogue_line {
        let _ = writeln!(out, r#"    <text class="speech" x="{cx}" y="{}">“{}”</text>"#, y + 6, escape(line));
    }
    if let Some(thought) = &e.thought {
        let _ = writeln!(out, r#"    <text class="thought" x="{cx}" y="{}">({})</text>"#, y + 6, escape(thought));
    }
    if let Some(action) = &e.action {
        let _ = writeln!(out, r#"    <text class="action" x="{cx}" y="{}">{}</text>"#, y + 62, escape(action));
    }
    out.push_str("  </g>\n");
}

/// Renders `scene` as a standalone SVG document. Row 0 is drawn at the top.
pub fn render_scene(scene: &SceneDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SIZE} {SIZE}" width="{SIZE}" height="{SIZE}" data-slot="{}">"#,
        scene.slot
    );
    out.push_str("  <style>text{font:9px sans-serif;text-anchor:middle}.emotion{text-anchor:end}circle,rect,polygon{fill:none;stroke:#333}.grid{stroke:#ddd;fill:none}</style>\n");
    let _ = writeln!(out, r#"  <rect class="frame" x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#);
    if scene.blank {
        out.push_str("  <g class=\"blank\"/>\n</svg>\n");
        return out;
    }
    for i in 1..GRID_SIZE as u32 {
        let p = i * CELL;
        let _ = writeln!(out, r#"  <path class="grid" d="M{p} 0V{SIZE}M0 {p}H{SIZE}"/>"#);
    }
    if let Some(setting) = &scene.setting {
        let _ = writeln!(out, r#"  <text class="setting" x="{}" y="12">{}</text>"#, SIZE / 2, escape(setting));
    }
    for e in &scene.elements {
        if let Some(cell) = scene.placements.get(&e.id) {
            element(&mut out, e, cell.col as u32 * CELL, cell.row as u32 * CELL);
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{Cell, Emotion, PanelSlot};

    fn scene() -> SceneDocument {
        let oliver = SceneElement {
            id: "actor-oliver".into(),
            kind: ElementKind::Actor,
            label: "Oliver".into(),
            action: Some("told the teacher".into()),
            dialogue_line: None,
            thought: None,
            emotion: Some(Emotion::Angry),
        };
        let teacher = SceneElement {
            id: "actor-teacher".into(),
            kind: ElementKind::Actor,
            label: "Teacher".into(),
            action: None,
            dialogue_line: Some("What's wrong?".into()),
            thought: None,
            emotion: None,
        };
        SceneDocument {
            slot: PanelSlot::C,
            blank: false,
            setting: Some("Classroom".into()),
            elements: vec![oliver, teacher],
            adjacencies: vec![("actor-oliver".into(), "actor-teacher".into())],
            placements: BTreeMap::from([
                ("actor-oliver".into(), Cell::new(2, 2)),
                ("actor-teacher".into(), Cell::new(1, 2)),
            ]),
            unsatisfied: vec![],
        }
    }

    #[test]
    fn golden() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/scene_c.svg");
        let svg = render_scene(&scene());
        if std::env::var_os("PANELWISE_BLESS").is_some() {
            std::fs::write(path, &svg).unwrap();
        }
        assert_eq!(svg, std::fs::read_to_string(path).unwrap());
    }

    #[test]
    fn blank_scene_has_no_elements() {
        let svg = render_scene(&SceneDocument::blank(PanelSlot::B));
        assert!(svg.contains("class=\"blank\""));
        assert!(!svg.contains("element"));
    }

    #[test]
    fn text_is_escaped() {
        let mut s = scene();
        s.setting = Some("<Tom & Jerry>".into());
        assert!(render_scene(&s).contains("&lt;Tom &amp; Jerry&gt;"));
    }
}
