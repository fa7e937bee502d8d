//! Keeps the guide and the doctest hooks in lockstep: every chapter listed
//! in the book's SUMMARY must be included as a doctested chapter in lib.rs,
//! and every markdown file in the book source must be reachable from the
//! SUMMARY.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

fn summary_chapters() -> BTreeSet<String> {
    let summary = include_str!("../../../book/src/SUMMARY.md");
    summary
        .lines()
        .filter_map(|line| {
            let start = line.find("](")? + 2;
            let end = line[start..].find(')')? + start;
            Some(line[start..end].to_string())
        })
        .collect()
}

#[test]
fn every_summary_chapter_is_doctested() {
    let lib = include_str!("../src/lib.rs");
    for chapter in summary_chapters() {
        assert!(
            lib.contains(&format!("book/src/{chapter}")),
            "chapter {chapter} is in SUMMARY.md but not doctested from lib.rs"
        );
    }
}

#[test]
fn every_book_file_is_in_the_summary() {
    let chapters = summary_chapters();
    let src_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src");
    for entry in fs::read_dir(src_dir).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name == "SUMMARY.md" || !name.ends_with(".md") {
            continue;
        }
        assert!(
            chapters.contains(&name),
            "book/src/{name} exists but is not listed in SUMMARY.md"
        );
    }
}
