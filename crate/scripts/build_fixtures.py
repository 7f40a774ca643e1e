"""Rebuild the bundled benchmark datasets under crates/core/tests/data/uci.

Every dataset here is a public UCI (or UCI-derived) classification table that
ships inside a Python package, so the fixtures can be regenerated offline:

  * scikit-learn: iris, wine, breast cancer (diagnostic)
  * Orange3 wheel: zoo, heart disease (Cleveland), titanic, ionosphere, lenses
  * pydataset (Rdatasets): MASS biopsy, Pima, crabs, birthwt; vcd Arthritis

Usage:
    pip download --no-deps -d /tmp/dl Orange3 pydataset
    python scripts/build_fixtures.py /tmp/dl

Rows with missing values are dropped. Each dataset is written as <name>.csv
plus a <name>.schema.toml naming the class column and numeric columns.
"""

import csv
import glob
import io
import os
import sys
import tarfile
import zipfile

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "data", "uci")


def write(name, header, rows, class_col, numeric, ignore=()):
    os.makedirs(OUT, exist_ok=True)
    clean = [r for r in rows if all(v not in ("", "?", "NA", None) for v in r)]
    with open(os.path.join(OUT, f"{name}.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(clean)
    with open(os.path.join(OUT, f"{name}.schema.toml"), "w") as f:
        f.write(f'class = "{class_col}"\n\n[columns]\n')
        for h in header:
            if h in ignore:
                kind = "ignore"
            elif h in numeric:
                kind = "numeric"
            else:
                kind = "categorical"
            f.write(f'"{h}" = "{kind}"\n')
    print(f"{name}: {len(clean)} rows, {len(header)} columns")


def sklearn_sets():
    from sklearn import datasets

    for name, loader in [("iris", datasets.load_iris), ("wine", datasets.load_wine),
                         ("breast_cancer", datasets.load_breast_cancer)]:
        d = loader()
        header = [f"f{i}" for i in range(d.data.shape[1])] + ["class"]
        rows = [[repr(float(v)) for v in x] + [str(int(y))] for x, y in zip(d.data, d.target)]
        write(name, header, rows, "class", set(header[:-1]))


def orange_sets(dl):
    whl = glob.glob(os.path.join(dl, "orange3-*.whl"))[0]
    z = zipfile.ZipFile(whl)
    specs = {
        "zoo": "Orange/datasets/zoo.tab",
        "heart_disease": "Orange/datasets/heart_disease.tab",
        "titanic": "Orange/datasets/titanic.tab",
        "ionosphere": "Orange/tests/datasets/ionosphere.tab",
        "lenses": "Orange/tests/datasets/lenses.tab",
    }
    for name, path in specs.items():
        lines = z.read(path).decode("utf-8").splitlines()
        header = [h.strip() for h in lines[0].split("\t")]
        types = lines[1].split("\t")
        flags = lines[2].split("\t") + [""] * len(header)
        rows = [[v.strip() for v in l.split("\t")] for l in lines[3:] if l.strip()]
        class_col = header[[i for i, f in enumerate(flags) if f.strip() == "class"][0]]
        numeric = {h for h, t in zip(header, types) if t.strip() in ("c", "continuous")}
        ignore = {h for h, f in zip(header, flags) if f.strip() == "meta"}
        write(name, header, rows, class_col, numeric, ignore)


def rdatasets(dl):
    tgz = glob.glob(os.path.join(dl, "pydataset-*.tar.gz"))[0]
    outer = tarfile.open(tgz)
    inner_member = [m for m in outer.getmembers() if m.name.endswith("resources.tar.gz")][0]
    inner = tarfile.open(fileobj=io.BytesIO(outer.extractfile(inner_member).read()))

    def read(path):
        m = inner.getmember(f"resources/rdata/csv/{path}")
        return list(csv.reader(io.StringIO(inner.extractfile(m).read().decode("utf-8"))))

    biopsy = read("MASS/biopsy.csv")
    header = biopsy[0][2:]
    write("biopsy", header, [r[2:] for r in biopsy[1:]], "class", set(header[:-1]))

    pima = read("MASS/Pima.tr.csv") + read("MASS/Pima.te.csv")[1:]
    header = pima[0][1:]
    write("pima", header, [r[1:] for r in pima[1:]], "type", set(header[:-1]))

    crabs = read("MASS/crabs.csv")
    header = crabs[0][1:]
    write("crabs", header, [r[1:] for r in crabs[1:]], "sp", {"FL", "RW", "CL", "CW", "BD"},
          ignore={"index"})

    bw = read("MASS/birthwt.csv")
    header = bw[0][1:]
    write("birthwt", header, [r[1:] for r in bw[1:]], "low", {"age", "lwt"}, ignore={"bwt"})

    arth = read("vcd/Arthritis.csv")
    header = arth[0][1:]
    write("arthritis", header, [r[1:] for r in arth[1:]], "Improved", {"Age"}, ignore={"ID"})


if __name__ == "__main__":
    dl = sys.argv[1] if len(sys.argv) > 1 else "/tmp/dl"
    sklearn_sets()
    orange_sets(dl)
    rdatasets(dl)
