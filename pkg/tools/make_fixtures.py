"""Regenerate the checked-in FCIDUMP fixtures (needs pyscf; not a package dependency)."""

from pathlib import Path

from pyscf import gto, scf
from pyscf.tools import fcidump

OUT = Path(__file__).resolve().parents[1] / "experiments" / "data"

GEOMETRIES = {
    "h2_sto3g_1.11.fcidump": "H 0 0 0; H 0 0 1.11",
    "h2_sto3g_0.74.fcidump": "H 0 0 0; H 0 0 0.74",
    "h2_sto3g_2.22.fcidump": "H 0 0 0; H 0 0 2.22",
    "h4_chain_sto3g_1.0.fcidump": "H 0 0 0; H 0 0 1.0; H 0 0 2.0; H 0 0 3.0",
    "lih_sto3g_1.6.fcidump": "Li 0 0 0; H 0 0 1.6",
}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, atom in GEOMETRIES.items():
        mol = gto.M(atom=atom, basis="sto-3g", unit="Angstrom", verbose=0)
        mf = scf.RHF(mol).run()
        fcidump.from_scf(mf, str(OUT / name), tol=1e-12)
        print(name, mf.e_tot)


if __name__ == "__main__":
    main()
