"""
The full pipeline on a one-paper corpus, offline
================================================

Builds a miniature workspace in a temp directory: one LaTeX source
bundle, a fixture index for both services, and a replay store with the
three canned responses this run needs. Then runs every stage and prints
the report. No network, no API keys; the run is bit-for-bit reproducible.
"""

import json
import tempfile
from pathlib import Path

import yaml

from citebias import load_config, prepare_source, run_pipeline
from citebias.clients import dump_json
from citebias.docprep import select_intro_references
from citebias.llmgate import render_postprocess_prompt, render_vanilla_prompt, store_mock_response

root = Path(tempfile.mkdtemp(prefix="citebias_demo_"))
print(f"workspace: {root}")

# -- one LaTeX source bundle ------------------------------------------------
paper_dir = root / "sources" / "2304.12345"
paper_dir.mkdir(parents=True)
(paper_dir / "main.tex").write_text(r"""\documentclass{article}
\usepackage{neurips_2023}
\title{Tiny Demo Paper}
\author{Demi Demo}
\begin{document}
\begin{abstract}
A tiny paper about demos.
\end{abstract}
\section{Introduction}
Demos were invented \cite{kOrigin}, refined \cite{kRefine}, and
benchmarked \cite{kBench}.
\bibliographystyle{unsrt}
\bibliography{refs}
\end{document}
""")
(paper_dir / "refs.bib").write_text("""
@article{kOrigin, author = {Olive Origin}, title = {The Origin of Demos},
  journal = {Demo Letters}, year = {1999}}
@article{kRefine, author = {Rex Refiner}, title = {Refining Demonstrations},
  journal = {International Conference on Machine Learning}, year = {2015}}
@article{kBench, author = {Bea Bencher}, title = {Benchmarking Demos},
  journal = {NeurIPS}, year = {2021}}
""")

# -- fixture index for both services ----------------------------------------
scholar = [
    {"index_id": "focal", "title": "Tiny Demo Paper", "authors": ["Demi Demo"],
     "venue": "NeurIPS", "year": 2023, "citation_count": 2, "influential_citation_count": 0,
     "reference_count": 3, "references": ["d1", "d2", "d3"]},
    {"index_id": "d1", "title": "The Origin of Demos", "authors": ["Olive Origin"],
     "venue": "Demo Letters", "year": 1999, "citation_count": 3200,
     "influential_citation_count": 210, "reference_count": 12, "references": ["d2"]},
    {"index_id": "d2", "title": "Refining Demonstrations", "authors": ["Rex Refiner"],
     "venue": "International Conference on Machine Learning", "year": 2015,
     "citation_count": 900, "influential_citation_count": 60, "reference_count": 25,
     "references": ["d1"]},
    {"index_id": "d3", "title": "Benchmarking Demos", "authors": ["Bea Bencher"],
     "venue": "NeurIPS", "year": 2021, "citation_count": 150,
     "influential_citation_count": 9, "reference_count": 30, "references": ["d1", "d2"]},
    {"index_id": "x1", "title": "Demonstrations at Scale", "authors": ["Sal Scale"],
     "venue": "arXiv preprint arXiv:2201.00001", "year": 2022, "citation_count": 4100,
     "influential_citation_count": 320, "reference_count": 40, "references": ["d1"]},
]
papers_dir = root / "index" / "scholar" / "papers"
papers_dir.mkdir(parents=True)
for rec in scholar:
    (papers_dir / f"{rec['index_id']}.json").write_text(dump_json(rec))
preprint_dir = root / "index" / "preprint"
preprint_dir.mkdir(parents=True)
(preprint_dir / "records.json").write_text(dump_json([
    {"preprint_id": "2304.12345", "title": "Tiny Demo Paper",
     "journal_ref": "NeurIPS 2023", "posted_date": "2023-04-12",
     "categories": ["cs.LG"], "authors": ["Demi Demo"]},
]))

# -- replay store ------------------------------------------------------------
# Render the exact prompts the pipeline will send, then script: slot 1 is
# a pairwise match, slot 2 an existing-but-uncited work, slot 3 fabricated.
prep = prepare_source(paper_dir)
content = prep.main_content.text + "\n"
intro_refs = select_intro_references(prep.main_content.citation_occurrences, prep.reference_texts)
ref_lines = "\n".join(f"[{num}] {raw}" for num, raw in intro_refs)
mock = root / "mock"

gt_table = """| Citation Number | Authors | Number of Authors | Title | Publication Year | Publication Venue |
|---|---|---|---|---|---|
| 1 | Olive Origin | 1 | The Origin of Demos | 1999 | Demo Letters |
| 2 | Rex Refiner | 1 | Refining Demonstrations | 2015 | International Conference on Machine Learning |
| 3 | Bea Bencher | 1 | Benchmarking Demos | 2021 | NeurIPS |
"""
store_mock_response(mock, render_postprocess_prompt(ref_lines), gt_table)

vanilla_response = "\n".join([
    "[1] Olive Origin. The Origin of Demos. Demo Letters, 1999.",
    "[2] Sal Scale. Demonstrations at Scale. arXiv, 2022.",
    "[3] Phil Phantom. Phantom Demos of the Invisible College. Lost Press, 1987.",
])
store_mock_response(mock, render_vanilla_prompt(content), vanilla_response, "vanilla-1")

gen_table = """| Citation Number | Authors | Number of Authors | Title | Publication Year | Publication Venue |
|---|---|---|---|---|---|
| 1 | Olive Origin | 1 | The Origin of Demos | 1999 | Demo Letters |
| 2 | Sal Scale | 1 | Demonstrations at Scale | 2022 | arXiv |
| 3 | Phil Phantom | 1 | Phantom Demos of the Invisible College | 1987 | Lost Press |
"""
store_mock_response(mock, render_postprocess_prompt(vanilla_response), gen_table, "vanilla-1")

# -- config and run -----------------------------------------------------------
(root / "config.yaml").write_text(yaml.safe_dump({
    "corpus": {"window": ["2023-01-01", "2023-12-31"], "category": "cs.LG",
               "venue_keywords": ["NeurIPS"], "blacklist": ["workshop"],
               "sources_dir": "sources"},
    "index": {"fixture_dir": "index"},
    "provider": {"model_id": "demo-mock", "kind": "mock"},
    "runs": {"vanilla": 1, "iterative": False},
    "cache_dir": "cache", "out_dir": "out", "mock_dir": "mock",
}))
config = load_config(root / "config.yaml")
manifest = run_pipeline(config)
print("\nstages:")
for stage, info in manifest["stages"].items():
    print(f"  {stage:<8} {info['status']}  {info['outcomes']}")

print("\nsummary.csv:")
print((root / "out" / "report" / "summary.csv").read_text())

verdicts = (root / "out" / "verdicts" / "demo-mock" / "vanilla-1" / "2304.12345.jsonl").read_text()
print("verdicts:")
for line in verdicts.splitlines():
    row = json.loads(line)
    print(f"  slot {row['citation_number']}: exists={row['exists']} "
          f"matched={row['matched_index_id']}")
