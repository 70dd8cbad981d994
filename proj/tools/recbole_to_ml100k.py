#!/usr/bin/env python3
"""Rebuild the classic ml-100k u.data / u.item layout from RecBole's atomic files.

RecBole ships MovieLens 100k as ml-100k.inter / ml-100k.item. The ratings rows
are identical to u.data; the item file keeps title, year and genre names, so
u.item is reconstructed with the 19 genre flag columns (release dates are
approximated as 01-Jan-<year>, URLs left empty).

usage: recbole_to_ml100k.py <recbole ml-100k dir> <output dir>
"""
import pathlib
import sys

GENRES = ["unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
          "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
          "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western"]


def main(src, dst):
    src, dst = pathlib.Path(src), pathlib.Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    with open(src / "ml-100k.inter", encoding="latin-1") as fin, \
            open(dst / "u.data", "w", encoding="latin-1") as fout:
        next(fin)
        for line in fin:
            user, item, rating, ts = line.rstrip("\n").split("\t")
            fout.write(f"{user}\t{item}\t{int(float(rating))}\t{int(float(ts))}\n")
    with open(src / "ml-100k.item", encoding="latin-1") as fin, \
            open(dst / "u.item", "w", encoding="latin-1") as fout:
        next(fin)
        for line in fin:
            item, title, year, classes = (line.rstrip("\n").split("\t") + [""] * 4)[:4]
            labels = set(classes.split())
            flags = "|".join("1" if g in labels else "0" for g in GENRES)
            shown = f"{title} ({year})" if year else title
            date = f"01-Jan-{year}" if year else ""
            fout.write(f"{item}|{shown}|{date}|||{flags}\n")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
