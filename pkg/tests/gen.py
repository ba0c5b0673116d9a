"""Seeded random flow-document generators shared across test modules."""

from __future__ import annotations

import random

VALUE_TYPES = ["text", "categorical", "number", "boolean", "datetime"]


def random_graph_doc(rng: random.Random, max_nodes: int = 50) -> dict:
    """A structurally valid flow document with random shape.

    Every produced document parses cleanly and validates without errors
    (warnings about unreachable nodes are possible and fine).
    """
    n = rng.randint(1, max_nodes)
    node_ids = [f"n{i}" for i in range(1, n + 1)]
    nodes = []
    slot_counter = 0
    for nid in node_ids:
        kind = rng.choice(["request", "external_action", "inform"])
        if kind == "request":
            slots = []
            for _ in range(rng.randint(1, 3)):
                slot_counter += 1
                vt = rng.choice(VALUE_TYPES)
                slot: dict = {"name": f"slot{slot_counter}", "value_type": vt}
                if vt == "categorical" or rng.random() < 0.5:
                    slot["examples"] = [f"sample {slot_counter}a", f"sample {slot_counter}b"]
                if rng.random() < 0.2:
                    slot["rule"] = f"slot{slot_counter} is required"
                slots.append(slot)
            nodes.append({"id": nid, "type": "request", "slots": slots})
        elif kind == "external_action":
            node: dict = {"id": nid, "type": "external_action", "function": f"do_{nid}"}
            if rng.random() < 0.5:
                node["params"] = {}
            if rng.random() < 0.3:
                node["returns"] = f"result_{nid}"
            if rng.random() < 0.3:
                node["ack_template"] = f"Working on {nid}."
            nodes.append(node)
        else:
            node = {"id": nid, "type": "inform", "template": f"Template for {nid}."}
            if rng.random() < 0.2:
                node["confirm_question"] = f"Proceed with {nid}?"
            nodes.append(node)

    edges = []
    for src in node_ids:
        targets = rng.sample(node_ids, k=rng.randint(0, min(3, n)))
        has_default = False
        for t in targets:
            if not has_default and rng.random() < 0.4:
                edges.append({"source": src, "target": t})
                has_default = True
            else:
                edges.append({"source": src, "target": t, "condition": f"user wants {t}"})

    doc: dict = {"nodes": nodes, "edges": edges, "start_node": node_ids[0]}
    if rng.random() < 0.5:
        doc["global_actions"] = [{
            "name": "hello",
            "response_template": "Hello!",
            "trigger_examples": ["hi", "hello"],
        }]
    if rng.random() < 0.5:
        doc["fallback_actions"] = [
            {"name": "goodbye", "response_template": "Bye."},
            {"name": "out_of_scope", "response_template": "I cannot help with that."},
        ]
    return doc
