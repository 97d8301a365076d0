# models package initialization
