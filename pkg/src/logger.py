# logger.py

import logging
import os

from dotenv import load_dotenv

load_dotenv()


class CloudWatchFilter(logging.Filter):
    def filter(self, record):
        allowed_messages = [
            "Round ",
            "Task dropped",
            "Scores published",
            "Simulation complete",
            "Uploaded file to s3://",
            "Wrote ",
        ]
        return any(record.getMessage().startswith(msg) for msg in allowed_messages)


# Configure logging
logging.basicConfig(level=os.getenv('GRADIENTS_SIM_LOG_LEVEL', 'INFO').upper(),
                    format='%(asctime)s - %(levelname)s - %(message)s',
                    handlers=[
                        logging.StreamHandler()
                    ])

logger = logging.getLogger('gradients_sim')


def attach_cloudwatch(log_group=None, stream_name=None):
    """Ship headline records to CloudWatch Logs when a log group is configured.

    Returns the handler, or None when no log group is set or the handler cannot
    be created (missing credentials, no region).
    """
    log_group = log_group or os.getenv('CLOUDWATCH_LOG_GROUP')
    if not log_group:
        return None
    stream_name = stream_name or os.getenv('CLOUDWATCH_LOG_STREAM', 'SimulationRuns')

    import watchtower

    try:
        cloudwatch_handler = watchtower.CloudWatchLogHandler(
            log_group_name=log_group,
            log_stream_name=stream_name
        )
    except Exception as e:
        logger.warning(f"CloudWatch logging disabled: {str(e)}")
        return None

    cloudwatch_handler.addFilter(CloudWatchFilter())
    logging.getLogger().addHandler(cloudwatch_handler)
    logger.debug(f"CloudWatch handler attached to {log_group}/{stream_name}")
    return cloudwatch_handler
