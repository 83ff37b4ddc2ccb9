# pages/01_Certificate_Report.py
import os
import sys
from pathlib import Path

import streamlit as st

# Zorg dat de main map in sys.path staat
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
from experiments import load_experiment, run_certificate_report
from ui import fmt, inject, kpi
from utils_offgrid import load_config

st.set_page_config(page_title="Certificate Report", layout="wide")
inject()

st.title("Certificate Report")

ROOT = Path(__file__).resolve().parent.parent
configs = sorted(str(p.relative_to(ROOT)) for p in (ROOT / "configs").glob("*.toml"))

c1, c2 = st.columns([3, 1])
with c1:
    cfg_path = st.selectbox("Config", configs, index=configs.index("configs/certify_gaussian.toml")
                            if "configs/certify_gaussian.toml" in configs else 0)
with c2:
    seed = st.number_input("Seed", min_value=0, value=0, step=1)

if st.button("Rapport maken", type="primary"):
    try:
        cfg = load_experiment(load_config(ROOT / cfg_path), seed=int(seed))
        with st.spinner("Proximity, δ-zoektocht en verificatie..."):
            report = run_certificate_report(cfg)
        diag = report.diagnostics.set_index("quantity")["value"]
        k1, k2, k3, k4 = st.columns(4)
        with k1:
            kpi("Verificatie", "geslaagd" if report.passed else "gefaald", "good" if report.passed else "bad")
        with k2:
            kpi("𝒱_T", fmt(diag.get("V_T", float("nan"))))
        with k3:
            kpi("δ̂", fmt(diag.get("delta_hat", float("nan"))))
        with k4:
            kpi("Vereiste scheiding", fmt(diag.get("required_separation", float("nan"))))

        st.markdown("#### Diagnostiek")
        st.dataframe(report.diagnostics, use_container_width=True)
        st.markdown("#### Verificatiemarges")
        if report.verification.empty:
            st.warning("Geen certificaat gebouwd; zie de failure-rijen hierboven.")
        else:
            st.dataframe(report.verification, use_container_width=True)
        st.download_button("Download CSV", report.to_csv(), file_name="certificate_report.csv", mime="text/csv")
    except Exception as e:
        st.error(f"Certificaatrapport mislukt: {e}")
