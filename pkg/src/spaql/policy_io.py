"""Human-readable agent files: a ``# key = value`` header block followed by
one tab-separated policy table per partition."""
from __future__ import annotations

from dataclasses import dataclass

from .environments import Environment
from .partition import PartitionTree, format_policy_rows, parse_policy_rows

EXACT_DIGITS = 17


@dataclass
class SavedAgent:
    env: str
    algo: str
    xi: float
    seed: int
    H: int
    trees: list[PartitionTree]

    @property
    def time_variant(self) -> bool:
        return len(self.trees) > 1

    def arm_count(self) -> int:
        return sum(t.arm_count() for t in self.trees)


def format_agent(meta: dict, trees: list[PartitionTree], digits: int = EXACT_DIGITS) -> str:
    lines = [f"# {k} = {v}" for k, v in meta.items()]
    lines.append(f"# trees = {len(trees)}")
    for h, tree in enumerate(trees):
        lines.append(f"# tree = {h}")
        lines += format_policy_rows(tree.spec, tree.to_policy_table(), digits=digits)
    return "\n".join(lines) + "\n"


def save_agent(path, meta: dict, trees: list[PartitionTree], digits: int = EXACT_DIGITS) -> None:
    with open(path, "w") as f:
        f.write(format_agent(meta, trees, digits))


def load_agent(path) -> SavedAgent:
    meta: dict[str, str] = {}
    sections: list[list[str]] = []
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                key, value = key.strip(), value.strip()
                if key == "tree":
                    sections.append([])
                else:
                    meta[key] = value
            elif line:
                if not sections:
                    sections.append([])
                sections[-1].append(line)
    for key in ("env", "H"):
        if key not in meta:
            raise ValueError(f"{path}: missing '{key}' in the header block")
    env = Environment(meta["env"])
    H = int(meta["H"])
    trees = [PartitionTree.from_policy_table(env.spec, H, parse_policy_rows(env.spec, sec)) for sec in sections]
    if "trees" in meta and int(meta["trees"]) != len(trees):
        raise ValueError(f"{path}: expected {meta['trees']} tables, found {len(trees)}")
    return SavedAgent(
        env=meta["env"],
        algo=meta.get("algo", "unknown"),
        xi=float(meta.get("xi", "nan")),
        seed=int(meta.get("seed", "0")),
        H=H,
        trees=trees,
    )
