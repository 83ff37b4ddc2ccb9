import math

import streamlit as st


def inject():
    css = '''
    <style>
      .og-card { border-radius:16px; padding:16px; background:#F5F7FB; border:1px solid #EEE; }
      .og-badge { display:inline-block; padding:2px 8px; border-radius:999px; background:#1F4E79; color:white; font-size:12px; }
      .kpi { border-radius:12px; padding:12px 14px; color:white; font-weight:700; }
      .kpi.good { background:#16A34A; }  /* green */
      .kpi.bad  { background:#F04438; }  /* red */
      .kpi.neutral  { background:#1F4E79; }  /* blue */
    </style>
    '''
    st.markdown(css, unsafe_allow_html=True)


def fmt(v, digits=4):
    """Korte wetenschappelijke notatie; inf/nan leesbaar."""
    try:
        v = float(v)
    except (TypeError, ValueError):
        return str(v)
    if math.isnan(v):
        return "n.v.t."
    if math.isinf(v):
        return "∞"
    return f"{v:.{digits}g}"


def kpi(label, value, state="neutral"):
    cls = f"kpi {state}"
    html = f'''
    <div class="{cls}">
      <div style="opacity:.9;font-size:12px;font-weight:500">{label}</div>
      <div style="font-size:22px;">{value}</div>
    </div>
    '''
    st.markdown(html, unsafe_allow_html=True)
