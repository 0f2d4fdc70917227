from sqlalchemy import Column, String, DateTime, Text
from sqlalchemy.orm import declarative_base
import datetime

Base = declarative_base()

class RunRecord(Base):
    __tablename__ = 'run_records'

    # ID: sha256 of command + config digest + seed
    id = Column(String(64), primary_key=True)
    command = Column(String(20))
    config_digest = Column(String(64))
    seed = Column(String(20))  # unsigned 64-bit, kept as text
    tool_version = Column(String(20))
    config = Column(Text)  # canonical JSON of the run input
    outputs = Column(Text)  # JSON list of written paths
    summary = Column(Text)  # JSON of the headline result
    created_at = Column(DateTime, default=datetime.datetime.utcnow)
