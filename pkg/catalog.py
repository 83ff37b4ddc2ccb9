# Ingebouwde dictionaries: kind -> label
DICTIONARY_KINDS = {
    "gaussian_location": "Gaussian location (spike deconvolutie)",
    "fourier_lowpass": "Fourier low-pass (super-resolutie)",
    "exponential_decay": "Exponential decay (Laplace)",
}

# Limietkernels per dictionary-kind; "self" = getabuleerde eigen kernel
LIMIT_KINDS = {
    "gaussian_location": "gaussian",
    "fourier_lowpass": "self",
    "exponential_decay": "self",
}
