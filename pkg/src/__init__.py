# HOMP Toolkit
