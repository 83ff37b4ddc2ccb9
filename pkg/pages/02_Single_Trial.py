# pages/02_Single_Trial.py
import os
import sys
from pathlib import Path

import pandas as pd
import streamlit as st

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
from experiments import load_experiment, prepare, run_trial
from ui import fmt, inject, kpi
from utils_offgrid import load_config

st.set_page_config(page_title="Single Trial", layout="wide")
inject()

st.title("Single Trial")

ROOT = Path(__file__).resolve().parent.parent
configs = sorted(str(p.relative_to(ROOT)) for p in (ROOT / "configs").glob("*.toml"))

c1, c2, c3 = st.columns([3, 1, 1])
with c1:
    cfg_path = st.selectbox("Config", configs, index=configs.index("configs/trial.toml")
                            if "configs/trial.toml" in configs else 0)
with c2:
    seed = st.number_input("Seed", min_value=0, value=0, step=1)
with c3:
    rep = st.number_input("Replicatie", min_value=0, value=0, step=1)

st.divider()


@st.cache_resource(show_spinner=False)
def _context(path: str, seed: int):
    return prepare(load_experiment(load_config(path), seed=seed))


if st.button("Trial draaien", type="primary"):
    try:
        with st.spinner("Certificaatconstanten en κ bepalen..."):
            ctx = _context(str(ROOT / cfg_path), int(seed))
        with st.spinner("Synthese, solver en suprema..."):
            res = run_trial(ctx, int(rep))

        k1, k2, k3, k4 = st.columns(4)
        with k1:
            kpi("R̂_T", fmt(res.R_hat))
        with k2:
            kpi("Bound 𝒞₀√s ν^{1/p} κ", fmt(res.bound), "good" if res.R_hat <= res.bound else "bad")
        with k3:
            kpi("Event", "binnen" if res.event_ok else "buiten", "good" if res.event_ok else "bad")
        with k4:
            kpi("κ", fmt(res.kappa))

        st.markdown("#### Suprema van de ruis")
        st.dataframe(pd.DataFrame({
            "statistiek": ["M0", "M1", "M2"],
            "waarde": [res.M0, res.M1, res.M2],
            "drempel 𝒞κν": [ctx.threshold] * 3,
        }), use_container_width=True)

        st.markdown("#### Waarheid")
        st.dataframe(ctx.truth.to_frame(ctx.measure), use_container_width=True)
        st.caption(f"T={ctx.T} · s={ctx.s} · n={ctx.n} · p={ctx.p} · K̂={res.K_hat} · "
                   f"{res.runtime_ms} ms · gecertificeerd: {'ja' if ctx.certified else 'nee'}")
        if res.solver_warning:
            st.warning("Solver niet geconvergeerd binnen de limieten; beste iterate getoond.")
    except Exception as e:
        st.error(f"Trial mislukt: {e}")
