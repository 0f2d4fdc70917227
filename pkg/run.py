#!/usr/bin/env python3
"""
QNG Depth Toolkit Runner
Starts the HTTP service that answers model, depth, trajectory, sweep and compare requests.
"""

import uvicorn
import sys
import os
from config import HOST, PORT, LOG_LEVEL

def main():
    print("🚀 Starting QNG depth service...")
    print(f"🌐 Server starting on {HOST}:{PORT}")
    print("💡 Press Ctrl+C to stop the server")
    print("-" * 50)

    try:
        uvicorn.run(
            "main:app",
            host=HOST,
            port=PORT,
            reload=os.getenv("RELOAD", "false").lower() == "true",
            log_level=LOG_LEVEL,
            workers=int(os.getenv("WORKERS", "1"))
        )
    except KeyboardInterrupt:
        print("\n🛑 QNG depth service stopped by user")
    except Exception as e:
        print(f"\n❌ Error starting QNG depth service: {e}")
        sys.exit(1)

if __name__ == "__main__":
    main()
