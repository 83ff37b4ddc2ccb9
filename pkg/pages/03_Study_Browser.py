import os
import sys
from pathlib import Path

import streamlit as st

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
from ui import fmt, inject, kpi
from utils_offgrid import get_setting, read_csv

st.set_page_config(page_title="Study Browser", layout="wide")
inject()

st.title("Study Browser")

out_dir = st.text_input("Resultatenmap", value=get_setting("OFFGRID_OUT_DIR", "out") or "out")
root = Path(out_dir)
studies = sorted({p.parent for p in root.glob("**/summary.csv")}) if root.is_dir() else []

if not studies:
    st.info("Geen studies gevonden. Draai eerst `python offgrid.py study --config ... --out DIR`.")
else:
    choice = st.selectbox("Studie", [str(p) for p in studies])
    try:
        summary = read_csv(Path(choice) / "summary.csv")
        k1, k2, k3 = st.columns(3)
        with k1:
            kpi("Sweeppunten", len(summary))
        with k2:
            frac = summary["frac_event_ok"].min()
            kpi("Min. fractie event_ok", fmt(frac, 3), "good" if frac >= 0.95 else "bad")
        with k3:
            viol = int(summary["bound_violations"].sum())
            kpi("Bound-schendingen", viol, "good" if viol == 0 else "bad")

        st.markdown("#### Samenvatting")
        st.dataframe(summary, use_container_width=True)

        plots = sorted(Path(choice).glob("plot_*.csv"))
        if plots:
            st.markdown("#### Plotdata (x, y, lo, hi)")
            pick = st.selectbox("Reeks", [p.name for p in plots])
            st.dataframe(read_csv(Path(choice) / pick), use_container_width=True)

        reps = Path(choice) / "replicates.csv"
        if reps.is_file():
            with st.expander("Replicaties"):
                st.dataframe(read_csv(reps), use_container_width=True)
    except Exception as e:
        st.error(f"Kon studie niet laden: {e}")
