"""Bundled merchant category code descriptions."""
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def mcc_table() -> dict[int, str]:
    text = resources.files("graphfraud.resources").joinpath("mcc_codes.txt").read_text("utf-8")
    table = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        code, desc = line.split("\t", 1)
        table[int(code)] = desc.strip()
    return table


def describe(mcc: int) -> str:
    return mcc_table().get(mcc, f"MCC {mcc:04d}")
