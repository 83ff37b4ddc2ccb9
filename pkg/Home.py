import streamlit as st
from catalog import DICTIONARY_KINDS, LIMIT_KINDS
from ui import inject

st.set_page_config(page_title="Offgrid Recovery Suite", layout="wide")
inject()

st.markdown("### Offgrid Recovery Suite")
st.markdown(
    '<div class="og-card">'
    '<span class="og-badge">Multi-signal</span><br><br>'
    'Kies een tool in de sidebar: Certificate Report, Single Trial of Study Browser.'
    '</div>', unsafe_allow_html=True
)

st.markdown("#### Tips")
st.write("- Configs staan in `configs/*.toml`; dezelfde bestanden werken met `python offgrid.py certify|trial|study`.")
st.write("- Zet `OFFGRID_OUT_DIR` in `.streamlit/secrets.toml` of de omgeving om de Study Browser naar je resultaten te laten wijzen.")
st.write("- Logniveau via `OFFGRID_LOG_LEVEL` (standaard INFO).")

st.markdown("#### Dictionaries")
for kind, label in DICTIONARY_KINDS.items():
    st.write(f"- `{kind}`: {label} (limiet: {LIMIT_KINDS[kind]})")
