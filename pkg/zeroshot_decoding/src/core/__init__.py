# Core modules for zero-shot CTC decoding
