#!/usr/bin/env python3
"""Build the bundled labelled calibration set and the default thresholds.

Writes src/citebias/data/labelled_matches.csv (100 labelled pairs: 50
true matches with realistic citation-style distortions, 50 non-matches
including a few near-miss titles) and src/citebias/data/
default_thresholds.json (the thresholds calibrate() selects on that set).

Run from the repo root after changing the matcher's scoring:

    python tools/make_labelled_fixture.py
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from citebias.matcher import LabelledPair, calibrate  # noqa: E402

DATA_DIR = REPO / "src" / "citebias" / "data"

# (title, [authors]) pool of plausible machine-learning works
PAPERS = [
    ("Attention Is All You Need", ["Ashish Vaswani", "Noam Shazeer", "Niki Parmar"]),
    ("Deep Residual Learning for Image Recognition", ["Kaiming He", "Xiangyu Zhang", "Shaoqing Ren", "Jian Sun"]),
    ("Adam: A Method for Stochastic Optimization", ["Diederik P. Kingma", "Jimmy Ba"]),
    ("Generative Adversarial Networks", ["Ian Goodfellow", "Jean Pouget-Abadie", "Mehdi Mirza"]),
    ("BERT: Pre-training of Deep Bidirectional Transformers for Language Understanding", ["Jacob Devlin", "Ming-Wei Chang", "Kenton Lee", "Kristina Toutanova"]),
    ("Language Models are Few-Shot Learners", ["Tom B. Brown", "Benjamin Mann", "Nick Ryder"]),
    ("Auto-Encoding Variational Bayes", ["Diederik P. Kingma", "Max Welling"]),
    ("Proximal Policy Optimization Algorithms", ["John Schulman", "Filip Wolski", "Prafulla Dhariwal"]),
    ("ImageNet Classification with Deep Convolutional Neural Networks", ["Alex Krizhevsky", "Ilya Sutskever", "Geoffrey E. Hinton"]),
    ("Long Short-Term Memory", ["Sepp Hochreiter", "Jurgen Schmidhuber"]),
    ("Dropout: A Simple Way to Prevent Neural Networks from Overfitting", ["Nitish Srivastava", "Geoffrey Hinton", "Alex Krizhevsky"]),
    ("Batch Normalization: Accelerating Deep Network Training by Reducing Internal Covariate Shift", ["Sergey Ioffe", "Christian Szegedy"]),
    ("Sequence to Sequence Learning with Neural Networks", ["Ilya Sutskever", "Oriol Vinyals", "Quoc V. Le"]),
    ("Neural Machine Translation by Jointly Learning to Align and Translate", ["Dzmitry Bahdanau", "Kyunghyun Cho", "Yoshua Bengio"]),
    ("Playing Atari with Deep Reinforcement Learning", ["Volodymyr Mnih", "Koray Kavukcuoglu", "David Silver"]),
    ("Mastering the Game of Go with Deep Neural Networks and Tree Search", ["David Silver", "Aja Huang", "Chris J. Maddison"]),
    ("A Survey on Transfer Learning", ["Sinno Jialin Pan", "Qiang Yang"]),
    ("Random Forests", ["Leo Breiman"]),
    ("Support-Vector Networks", ["Corinna Cortes", "Vladimir Vapnik"]),
    ("Gradient-Based Learning Applied to Document Recognition", ["Yann LeCun", "Leon Bottou", "Yoshua Bengio", "Patrick Haffner"]),
    ("XGBoost: A Scalable Tree Boosting System", ["Tianqi Chen", "Carlos Guestrin"]),
    ("Learning Transferable Visual Models From Natural Language Supervision", ["Alec Radford", "Jong Wook Kim", "Chris Hallacy"]),
    ("Denoising Diffusion Probabilistic Models", ["Jonathan Ho", "Ajay Jain", "Pieter Abbeel"]),
    ("An Image is Worth 16x16 Words: Transformers for Image Recognition at Scale", ["Alexey Dosovitskiy", "Lucas Beyer", "Alexander Kolesnikov"]),
    ("Model-Agnostic Meta-Learning for Fast Adaptation of Deep Networks", ["Chelsea Finn", "Pieter Abbeel", "Sergey Levine"]),
    ("Semi-Supervised Classification with Graph Convolutional Networks", ["Thomas N. Kipf", "Max Welling"]),
    ("Graph Attention Networks", ["Petar Velickovic", "Guillem Cucurull", "Arantxa Casanova"]),
    ("Distilling the Knowledge in a Neural Network", ["Geoffrey Hinton", "Oriol Vinyals", "Jeff Dean"]),
    ("Explaining and Harnessing Adversarial Examples", ["Ian J. Goodfellow", "Jonathon Shlens", "Christian Szegedy"]),
    ("Visualizing and Understanding Convolutional Networks", ["Matthew D. Zeiler", "Rob Fergus"]),
    ("Efficient Estimation of Word Representations in Vector Space", ["Tomas Mikolov", "Kai Chen", "Greg Corrado", "Jeffrey Dean"]),
    ("GloVe: Global Vectors for Word Representation", ["Jeffrey Pennington", "Richard Socher", "Christopher D. Manning"]),
    ("Faster R-CNN: Towards Real-Time Object Detection with Region Proposal Networks", ["Shaoqing Ren", "Kaiming He", "Ross Girshick", "Jian Sun"]),
    ("You Only Look Once: Unified, Real-Time Object Detection", ["Joseph Redmon", "Santosh Divvala", "Ross Girshick"]),
    ("U-Net: Convolutional Networks for Biomedical Image Segmentation", ["Olaf Ronneberger", "Philipp Fischer", "Thomas Brox"]),
    ("Human-Level Control Through Deep Reinforcement Learning", ["Volodymyr Mnih", "Koray Kavukcuoglu", "David Silver"]),
    ("Trust Region Policy Optimization", ["John Schulman", "Sergey Levine", "Philipp Moritz"]),
    ("WaveNet: A Generative Model for Raw Audio", ["Aaron van den Oord", "Sander Dieleman", "Heiga Zen"]),
    ("Neural Ordinary Differential Equations", ["Ricky T. Q. Chen", "Yulia Rubanova", "Jesse Bettencourt"]),
    ("The Lottery Ticket Hypothesis: Finding Sparse, Trainable Neural Networks", ["Jonathan Frankle", "Michael Carbin"]),
    ("On Calibration of Modern Neural Networks", ["Chuan Guo", "Geoff Pleiss", "Yu Sun", "Kilian Q. Weinberger"]),
    ("Scaling Laws for Neural Language Models", ["Jared Kaplan", "Sam McCandlish", "Tom Henighan"]),
    ("Chain-of-Thought Prompting Elicits Reasoning in Large Language Models", ["Jason Wei", "Xuezhi Wang", "Dale Schuurmans"]),
    ("Training Language Models to Follow Instructions with Human Feedback", ["Long Ouyang", "Jeff Wu", "Xu Jiang"]),
    ("Emergent Abilities of Large Language Models", ["Jason Wei", "Yi Tay", "Rishi Bommasani"]),
    ("Highly Accurate Protein Structure Prediction with AlphaFold", ["John Jumper", "Richard Evans", "Alexander Pritzel"]),
    ("A Unified Approach to Interpreting Model Predictions", ["Scott M. Lundberg", "Su-In Lee"]),
    ("Why Should I Trust You? Explaining the Predictions of Any Classifier", ["Marco Tulio Ribeiro", "Sameer Singh", "Carlos Guestrin"]),
    ("Federated Learning: Challenges, Methods, and Future Directions", ["Tian Li", "Anit Kumar Sahu", "Ameet Talwalkar"]),
    ("A Style-Based Generator Architecture for Generative Adversarial Networks", ["Tero Karras", "Samuli Laine", "Timo Aila"]),
]


def abbreviate(name: str) -> str:
    parts = name.split()
    if len(parts) < 2:
        return name
    return f"{parts[0][0]}. {parts[-1]}"


def true_pairs() -> list[dict]:
    """50 matches: the generated side carries citation-style distortions."""
    rows = []
    for i, (title, authors) in enumerate(PAPERS):
        kind = i % 5
        if kind == 0:
            gen_title = title + "."
            gen_authors = list(authors)
            et_al = False
        elif kind == 1:
            gen_title = title.lower()
            gen_authors = [abbreviate(a) for a in authors]
            et_al = False
        elif kind == 2:
            # subtitle dropped when there is one; trailing period otherwise
            gen_title = title.split(":")[0] if ":" in title else title + "."
            gen_authors = list(authors)
            et_al = False
        elif kind == 3:
            gen_title = title
            gen_authors = authors[:1]
            et_al = True
        else:
            gen_title = title.replace("-", " ")
            gen_authors = [abbreviate(authors[0]), *authors[1:]]
            et_al = False
        rows.append(
            {
                "generated_title": gen_title,
                "generated_authors": "; ".join(gen_authors) + ("; et al." if et_al else ""),
                "candidate_id": f"c{i:03d}",
                "candidate_title": title,
                "candidate_authors": "; ".join(authors),
                "label": "true",
            }
        )
    return rows


# Near-misses that pin the thresholds. Same-author follow-up titles force
# the title threshold above their title scores; containment-style titles
# by other groups force the author threshold above their author scores.
NEAR_MISS_FALSE = [
    # same group, different work: title must gate these
    ("Neural Machine Translation by Jointly Learning to Align and Translate",
     "Dzmitry Bahdanau; Kyunghyun Cho; Yoshua Bengio",
     "Neural Machine Translation by Jointly Learning to Align and Summarize",
     "Dzmitry Bahdanau; Kyunghyun Cho; Yoshua Bengio"),
    ("Playing Atari with Deep Reinforcement Learning",
     "Volodymyr Mnih; Koray Kavukcuoglu; David Silver",
     "Playing Go with Deep Reinforcement Learning",
     "Volodymyr Mnih; Koray Kavukcuoglu; David Silver"),
    ("Emergent Abilities of Large Language Models",
     "Jason Wei; Yi Tay; Rishi Bommasani",
     "Evaluating Abilities of Large Language Models",
     "Jason Wei; Yi Tay; Rishi Bommasani"),
    ("Proximal Policy Optimization Algorithms",
     "John Schulman; Filip Wolski; Prafulla Dhariwal",
     "Proximal Policy Gradient Algorithms",
     "John Schulman; Filip Wolski; Prafulla Dhariwal"),
    ("Scaling Laws for Neural Language Models",
     "Jared Kaplan; Sam McCandlish; Tom Henighan",
     "Scaling Laws for Neural Machine Translation",
     "Jared Kaplan; Sam McCandlish; Tom Henighan"),
    ("A Survey on Transfer Learning",
     "Sinno Jialin Pan; Qiang Yang",
     "A Survey on Deep Transfer Learning",
     "Chuanqi Tan; Qiang Yang"),
    # extended/derived titles by other groups: authors must gate these
    ("Generative Adversarial Networks",
     "Ian Goodfellow; Jean Pouget-Abadie; Mehdi Mirza",
     "Conditional Generative Adversarial Networks",
     "Mehdi Mirza; Simon Osindero"),
    ("Graph Attention Networks",
     "Petar Velickovic; Guillem Cucurull; Arantxa Casanova",
     "Heterogeneous Graph Attention Network",
     "Xiao Wang; Houye Ji; Chuan Shi"),
    ("Denoising Diffusion Probabilistic Models",
     "Jonathan Ho; Ajay Jain; Pieter Abbeel",
     "Improved Denoising Diffusion Probabilistic Models",
     "Alexander Quinn Nichol; Prafulla Dhariwal"),
    ("Random Forests",
     "Leo Breiman",
     "Online Random Forests",
     "Amir Saffari; Christian Leistner; Jan Santner"),
    ("Attention Is All You Need",
     "Ashish Vaswani; Noam Shazeer; Niki Parmar",
     "Attention Is Not All You Need: Pure Attention Loses Rank Doubly Exponentially with Depth",
     "Yihe Dong; Jean-Baptiste Cordonnier; Andreas Loukas"),
]


def false_pairs() -> list[dict]:
    """50 non-matches: topical neighbors plus the engineered near-misses."""
    rows = []
    for i, (gt, ga, ct, ca) in enumerate(NEAR_MISS_FALSE):
        rows.append(
            {
                "generated_title": gt,
                "generated_authors": ga,
                "candidate_id": f"h{i:03d}",
                "candidate_title": ct,
                "candidate_authors": ca,
                "label": "false",
            }
        )
    n_easy = 50 - len(rows)
    for k in range(n_easy):
        gen_title, gen_authors = PAPERS[k % len(PAPERS)]
        cand_title, cand_authors = PAPERS[(k + 11) % len(PAPERS)]
        rows.append(
            {
                "generated_title": gen_title,
                "generated_authors": "; ".join(gen_authors),
                "candidate_id": f"f{k:03d}",
                "candidate_title": cand_title,
                "candidate_authors": "; ".join(cand_authors),
                "label": "false",
            }
        )
    return rows


def main() -> None:
    rows = true_pairs() + false_pairs()
    assert len(rows) == 100

    csv_path = DATA_DIR / "labelled_matches.csv"
    fieldnames = [
        "generated_title",
        "generated_authors",
        "candidate_id",
        "candidate_title",
        "candidate_authors",
        "label",
    ]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {csv_path}")

    pairs: list[LabelledPair] = []
    from citebias.matcher import load_labelled_csv

    pairs = load_labelled_csv(csv_path)
    scored = [(p.scores(), p.label) for p in pairs]
    true_scores = [s for s, label in scored if label]
    false_scores = [s for s, label in scored if not label]
    min_true_title = min(s[0] for s in true_scores)
    min_true_author = min(s[1] for s in true_scores)
    above = sum(
        1 for s in false_scores if s[0] >= min_true_title and s[1] >= min_true_author
    )
    print(f"min true scores: title={min_true_title:.3f} author={min_true_author:.3f}")
    print(f"false pairs above the true minimum: {above}")

    report = calibrate(pairs)
    print(
        "selected:",
        report.thresholds,
        "accuracy:",
        report.accuracy,
        report.confusion_matrix(),
    )
    assert report.missed_true == 0, "calibration should keep every true match"
    assert report.accepted_false <= 5, "too many near-misses accepted"
    assert report.accuracy >= 0.95
    # shipped defaults must gate on both axes, not degenerate to zero
    assert report.thresholds.title_threshold >= 0.9, report.thresholds
    assert report.thresholds.author_threshold >= 0.5, report.thresholds

    thresholds_path = DATA_DIR / "default_thresholds.json"
    payload = {
        "title_threshold": report.thresholds.title_threshold,
        "author_threshold": report.thresholds.author_threshold,
        "provenance": "calibrated on bundled labelled_matches.csv",
    }
    thresholds_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {thresholds_path}")


if __name__ == "__main__":
    main()
