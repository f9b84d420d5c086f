"""
Citation-graph categories and connectivity metrics
==================================================

Per focal paper, the graph holds the paper itself, its introduction's
ground-truth references, and the matched generated references. Generated
nodes are tagged in the introduction / in the paper / linked / isolated,
and two set metrics summarize how tightly the linked generations connect
to the ground truth.
"""

from fractions import Fraction

from citebias import (
    PaperRecord,
    Venue,
    avg_clustering,
    boolean_edge_density,
    build_graph,
    categorize,
    clustering_coefficient,
    edge_expansion,
)

# A focal paper citing seven ground-truth references g1..g7.
focal = PaperRecord(
    preprint_id="demo.00001",
    index_id="focal",
    title="A Demo Paper",
    venue=Venue("NeurIPS", "NeurIPS 2023"),
    year=2023,
    posted_date="2023-01-01",
    authors=["D. Emo"],
    reference_ids=[f"g{i}" for i in range(1, 8)],
)
gt = list(focal.reference_ids)

# Three generated references exist but appear nowhere in the paper:
# l1 and l2 cite ground-truth works, l3 cites only its fellow generation.
adjacency = {
    "focal": gt,
    "l1": ["g1", "g2", "g3", "g4"],
    "l2": ["g5", "g6", "g7"],
    "l3": ["l1"],
    "g1": ["g2"],  # ground-truth works also cite each other
    "g2": [],
}
graph = build_graph(focal, gt, ["l1", "l2", "l3"], adjacency)
tags = categorize(graph, focal)
print("node categories:")
for node in sorted(tags):
    print(f"  {node:>6}  {tags[node]}")

# Boolean edge density: the share of linked generations touching any
# ground-truth reference. l3 links only within its group, so 2/3.
bed = boolean_edge_density(graph)
print(f"\nboolean edge density: {bed} = {float(bed):.3f}")

# Edge expansion: cross edges between {l1,l2,l3} and the ground truth,
# divided by the smaller set size: 7 edges / 3 nodes.
expansion = edge_expansion(graph)
print(f"edge expansion: {expansion} = {float(expansion):.3f}")
assert bed == Fraction(2, 3) and expansion == Fraction(7, 3)

# Clustering on the undirected projection; averages skip zero nodes.
print(f"\nclustering(g1) = {clustering_coefficient(graph, 'g1')}")
print(f"clustering(g2) = {clustering_coefficient(graph, 'g2')}")
print(f"average clustering over ground truth: {avg_clustering(graph, set(gt))}")
